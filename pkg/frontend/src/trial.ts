// One live trial over a WebSocket: stream proxy breathing samples up,
// collect feedback frames, live scores, and the final server verdict.
// Works against the browser WebSocket and the ws package alike.

import {
  AckMsg,
  ProtocolError,
  ScoreMsg,
  TargetSpec,
  TrialConfig,
  TrialResultMsg,
  bye,
  hello,
  parseServerMessage,
  sampleBatch,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  // deliberately loose so browser WebSocket and the ws package both fit
  addEventListener(
    type: "open" | "message" | "close" | "error",
    fn: (ev: any) => void,
  ): void;
  readyState: number;
}

export type InputMode = "pointer" | "keyhold" | "replay";

export type ConnectionState = "connecting" | "open" | "closed" | "error";

export interface UiSessionState {
  connection: ConnectionState;
  activeTrial: { pattern: string; modality: string; elapsedS: number } | null;
  liveScore: number | null;
  inputMode: InputMode;
  aborted: boolean;
  banner: string | null;
}

/** Live score rendering: unknown correlation shows as an em-less dash. */
export function scoreLabel(score: number | null): string {
  return score === null ? "—" : score.toFixed(2);
}

export const BATCH_SAMPLES = 3; // 0.125 s at 24 Hz, matches the wire default

export interface TrialHooks {
  onFeedback?(tUs: number, triple: [number, number, number]): void;
  onScore?(score: ScoreMsg): void;
  onStateChange?(state: UiSessionState): void;
}

export class TrialClient {
  readonly state: UiSessionState;
  target: TargetSpec | null = null;
  readonly scores: ScoreMsg[] = [];
  feedbackFrames = 0;

  private buffer: number[] = [];
  private samplesSent = 0;
  private started = false;
  private ackResolve: ((a: AckMsg) => void) | null = null;
  private ackReject: ((e: Error) => void) | null = null;
  private resultResolve: ((r: TrialResultMsg) => void) | null = null;
  private resultReject: ((e: Error) => void) | null = null;
  private result: TrialResultMsg | null = null;

  constructor(
    private socket: SocketLike,
    readonly config: TrialConfig,
    modality: string,
    inputMode: InputMode,
    private hooks: TrialHooks = {},
  ) {
    this.state = {
      connection: socket.readyState === 1 ? "open" : "connecting",
      activeTrial: { pattern: config.pattern, modality, elapsedS: 0 },
      liveScore: null,
      inputMode,
      aborted: false,
      banner: null,
    };
    socket.addEventListener("open", () => {
      this.state.connection = "open";
      this.changed();
    });
    socket.addEventListener("message", (ev: { data: unknown }) => {
      this.onText(String(ev.data));
    });
    socket.addEventListener("close", () => this.onClosed());
    socket.addEventListener("error", () => {
      this.state.connection = "error";
      this.changed();
    });
  }

  /** Send hello and wait for the server to accept the trial config. */
  start(): Promise<AckMsg> {
    if (this.started) throw new Error("trial already started");
    this.started = true;
    return new Promise((resolve, reject) => {
      this.ackResolve = resolve;
      this.ackReject = reject;
      this.whenOpen(() => this.socket.send(hello(this.config)));
    });
  }

  /** Queue one breathing sample; batches go out every BATCH_SAMPLES. */
  pushSample(v: number): void {
    if (this.result || this.state.aborted) return;
    this.buffer.push(v);
    if (this.buffer.length >= BATCH_SAMPLES) this.flushBatch();
  }

  get elapsedS(): number {
    return (
      (this.samplesSent + this.buffer.length) / this.config.sample_rate_hz
    );
  }

  get progress(): number {
    return Math.min(1, this.elapsedS / this.config.duration_s);
  }

  /** Flush, say bye, and wait for the final server-side result. */
  finish(): Promise<TrialResultMsg> {
    this.flushBatch();
    const tUs = Math.round(
      (this.samplesSent / this.config.sample_rate_hz) * 1e6,
    );
    return new Promise((resolve, reject) => {
      this.resultResolve = resolve;
      this.resultReject = reject;
      this.socket.send(bye(tUs));
    });
  }

  private whenOpen(fn: () => void): void {
    if (this.state.connection === "open") fn();
    else this.socket.addEventListener("open", fn);
  }

  private flushBatch(): void {
    if (this.buffer.length === 0) return;
    const tUs = Math.round(
      (this.samplesSent / this.config.sample_rate_hz) * 1e6,
    );
    this.socket.send(sampleBatch(tUs, this.buffer));
    this.samplesSent += this.buffer.length;
    this.buffer = [];
    if (this.state.activeTrial) {
      this.state.activeTrial.elapsedS = this.elapsedS;
    }
    this.changed();
  }

  private onText(text: string): void {
    let msg;
    try {
      msg = parseServerMessage(text);
    } catch (e) {
      this.state.banner =
        e instanceof ProtocolError ? e.message : "bad server message";
      this.changed();
      return;
    }
    switch (msg.type) {
      case "ack":
        this.target = msg.target;
        this.ackResolve?.(msg);
        this.ackResolve = this.ackReject = null;
        break;
      case "sample_batch":
        this.feedbackFrames += 1;
        if (msg.values.length === 3) {
          this.hooks.onFeedback?.(
            msg.t_us,
            msg.values as [number, number, number],
          );
        }
        break;
      case "score": {
        this.scores.push(msg);
        this.state.liveScore =
          msg.r === null ? null : Math.max(-1, Math.min(1, msg.r));
        this.hooks.onScore?.(msg);
        this.changed();
        break;
      }
      case "trial_result":
        this.result = msg;
        this.state.aborted = msg.aborted;
        this.state.activeTrial = null;
        this.resultResolve?.(msg);
        this.resultResolve = this.resultReject = null;
        this.changed();
        break;
      case "error": {
        const err = new Error(msg.message);
        if (this.ackReject) {
          this.ackReject(err);
          this.ackResolve = this.ackReject = null;
        } else {
          this.state.banner = msg.message;
        }
        this.changed();
        break;
      }
      case "bye":
        break;
    }
  }

  private onClosed(): void {
    this.state.connection = "closed";
    // a close before the verdict means no score gets recorded
    if (this.result === null) {
      this.state.aborted = true;
      this.state.activeTrial = null;
      this.state.liveScore = null;
      this.state.banner = this.state.banner ?? "connection lost";
      const err = new Error("connection lost");
      this.ackReject?.(err);
      this.ackResolve = this.ackReject = null;
      this.resultReject?.(err);
      this.resultResolve = this.resultReject = null;
    }
    this.changed();
  }

  private changed(): void {
    this.hooks.onStateChange?.(this.state);
  }
}
