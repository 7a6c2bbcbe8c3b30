// JSON message schema spoken by the trial server. One discriminated
// union per direction; parseServerMessage is the only entry point for
// incoming text so malformed data fails in exactly one place.

export interface TrialConfig {
  pattern: string;
  sample_rate_hz: number;
  duration_s: number;
  seed: number;
}

export interface TargetSpec {
  pace_bpm: number;
  inhale_s: number;
  exhale_s: number;
  hold_in_s: number;
  hold_out_s: number;
  amplitude: number;
  variability_frac: number;
}

export interface HelloMsg {
  type: "hello";
  stream_id: number;
  t_us: number;
  config: TrialConfig;
}

export interface SampleBatchMsg {
  type: "sample_batch";
  stream_id: number;
  t_us: number;
  values: number[];
}

export interface ByeMsg {
  type: "bye";
  stream_id: number;
  t_us: number;
}

export interface MarkerMsg {
  type: "marker";
  stream_id: number;
  t_us: number;
  label: string;
}

export type ClientMsg = HelloMsg | SampleBatchMsg | MarkerMsg | ByeMsg;

export interface AckMsg {
  type: "ack";
  stream_id: number;
  t_us: number;
  target: TargetSpec;
}

export interface ScoreMsg {
  type: "score";
  t_s: number;
  r: number | null;
  lag_s: number | null;
}

export interface TrialResultMsg {
  type: "trial_result";
  aborted: boolean;
  result: {
    r: number;
    lag_s: number;
    pace_delta_bpm: number | null;
    duration_s: number;
  } | null;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg =
  | AckMsg
  | SampleBatchMsg
  | ScoreMsg
  | TrialResultMsg
  | ErrorMsg
  | ByeMsg;

export class ProtocolError extends Error {}

export const SAMPLE_STREAM_ID = 1;
export const FEEDBACK_STREAM_ID = 2;

export function hello(config: TrialConfig): string {
  return JSON.stringify({
    type: "hello",
    stream_id: SAMPLE_STREAM_ID,
    t_us: 0,
    config,
  });
}

export function sampleBatch(tUs: number, values: number[]): string {
  return JSON.stringify({
    type: "sample_batch",
    stream_id: SAMPLE_STREAM_ID,
    t_us: tUs,
    values,
  });
}

export function marker(tUs: number, label: string): string {
  return JSON.stringify({
    type: "marker",
    stream_id: SAMPLE_STREAM_ID,
    t_us: tUs,
    label,
  });
}

export function bye(tUs: number): string {
  return JSON.stringify({ type: "bye", stream_id: SAMPLE_STREAM_ID, t_us: tUs });
}

function num(doc: Record<string, unknown>, key: string): number {
  const v = doc[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ProtocolError(`field ${key} missing or not a number`);
  }
  return v;
}

function numOrNull(doc: Record<string, unknown>, key: string): number | null {
  const v = doc[key];
  if (v === null || v === undefined) return null;
  if (typeof v !== "number") throw new ProtocolError(`field ${key} not a number`);
  return v;
}

export function parseServerMessage(text: string): ServerMsg {
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new ProtocolError("message is not valid JSON");
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ProtocolError("message is not an object");
  }
  switch (doc.type) {
    case "ack": {
      const t = doc.target as Record<string, unknown> | undefined;
      if (typeof t !== "object" || t === null) {
        throw new ProtocolError("ack without target");
      }
      return {
        type: "ack",
        stream_id: num(doc, "stream_id"),
        t_us: num(doc, "t_us"),
        target: {
          pace_bpm: num(t, "pace_bpm"),
          inhale_s: num(t, "inhale_s"),
          exhale_s: num(t, "exhale_s"),
          hold_in_s: num(t, "hold_in_s"),
          hold_out_s: num(t, "hold_out_s"),
          amplitude: num(t, "amplitude"),
          variability_frac: num(t, "variability_frac"),
        },
      };
    }
    case "sample_batch": {
      const values = doc.values;
      if (!Array.isArray(values) || values.some((v) => typeof v !== "number")) {
        throw new ProtocolError("sample_batch values must be numbers");
      }
      return {
        type: "sample_batch",
        stream_id: num(doc, "stream_id"),
        t_us: num(doc, "t_us"),
        values: values as number[],
      };
    }
    case "score":
      return {
        type: "score",
        t_s: num(doc, "t_s"),
        r: numOrNull(doc, "r"),
        lag_s: numOrNull(doc, "lag_s"),
      };
    case "trial_result": {
      const aborted = doc.aborted;
      if (typeof aborted !== "boolean") {
        throw new ProtocolError("trial_result without aborted flag");
      }
      let result: TrialResultMsg["result"] = null;
      if (doc.result !== null && doc.result !== undefined) {
        const r = doc.result as Record<string, unknown>;
        result = {
          r: num(r, "r"),
          lag_s: num(r, "lag_s"),
          pace_delta_bpm: numOrNull(r, "pace_delta_bpm"),
          duration_s: num(r, "duration_s"),
        };
      }
      return { type: "trial_result", aborted, result };
    }
    case "error": {
      const message = doc.message;
      return {
        type: "error",
        message: typeof message === "string" ? message : "unknown error",
      };
    }
    case "bye":
      return {
        type: "bye",
        stream_id: num(doc, "stream_id"),
        t_us: num(doc, "t_us"),
      };
    default:
      throw new ProtocolError(`unknown message type ${String(doc.type)}`);
  }
}
