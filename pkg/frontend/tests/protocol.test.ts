import { describe, expect, it } from "vitest";

import {
  FEEDBACK_STREAM_ID,
  ProtocolError,
  SAMPLE_STREAM_ID,
  bye,
  hello,
  marker,
  parseServerMessage,
  sampleBatch,
} from "../src/protocol.js";

const CONFIG = {
  pattern: "Slow+HoldIn",
  sample_rate_hz: 24,
  duration_s: 40,
  seed: 7,
};

describe("client serializers", () => {
  it("hello carries the trial config on the sample stream", () => {
    const doc = JSON.parse(hello(CONFIG));
    expect(doc).toEqual({
      type: "hello",
      stream_id: SAMPLE_STREAM_ID,
      t_us: 0,
      config: CONFIG,
    });
  });

  it("sample batches keep timestamp and values", () => {
    const doc = JSON.parse(sampleBatch(125000, [0.1, 0.2, 0.3]));
    expect(doc.type).toBe("sample_batch");
    expect(doc.stream_id).toBe(SAMPLE_STREAM_ID);
    expect(doc.t_us).toBe(125000);
    expect(doc.values).toEqual([0.1, 0.2, 0.3]);
  });

  it("markers and bye serialize", () => {
    expect(JSON.parse(marker(5, "half"))).toEqual({
      type: "marker",
      stream_id: SAMPLE_STREAM_ID,
      t_us: 5,
      label: "half",
    });
    expect(JSON.parse(bye(40000000))).toEqual({
      type: "bye",
      stream_id: SAMPLE_STREAM_ID,
      t_us: 40000000,
    });
  });
});

describe("parseServerMessage", () => {
  it("parses an ack with its target spec", () => {
    const msg = parseServerMessage(
      JSON.stringify({
        type: "ack",
        stream_id: 1,
        t_us: 0,
        target: {
          pace_bpm: 6,
          inhale_s: 4,
          exhale_s: 4,
          hold_in_s: 2,
          hold_out_s: 0,
          amplitude: 0.6,
          variability_frac: 0,
        },
      }),
    );
    expect(msg.type).toBe("ack");
    if (msg.type !== "ack") return;
    expect(msg.target.pace_bpm).toBe(6);
    expect(msg.target.hold_in_s).toBe(2);
    expect(msg.target.variability_frac).toBe(0);
  });

  it("parses feedback sample batches", () => {
    const msg = parseServerMessage(
      JSON.stringify({
        type: "sample_batch",
        stream_id: FEEDBACK_STREAM_ID,
        t_us: 100000,
        values: [0.2, 0.04, 0.45],
      }),
    );
    expect(msg.type).toBe("sample_batch");
    if (msg.type !== "sample_batch") return;
    expect(msg.stream_id).toBe(FEEDBACK_STREAM_ID);
    expect(msg.values).toEqual([0.2, 0.04, 0.45]);
  });

  it("parses scores, including the not-yet-scorable kind", () => {
    const warm = parseServerMessage(
      JSON.stringify({ type: "score", t_s: 5, r: 0.93, lag_s: -0.125 }),
    );
    expect(warm).toEqual({ type: "score", t_s: 5, r: 0.93, lag_s: -0.125 });
    const idle = parseServerMessage(
      JSON.stringify({ type: "score", t_s: 5.5, r: null, lag_s: null }),
    );
    expect(idle).toEqual({ type: "score", t_s: 5.5, r: null, lag_s: null });
  });

  it("parses trial results, aborted and complete", () => {
    const gone = parseServerMessage(
      JSON.stringify({ type: "trial_result", aborted: true, result: null }),
    );
    expect(gone).toEqual({ type: "trial_result", aborted: true, result: null });

    const done = parseServerMessage(
      JSON.stringify({
        type: "trial_result",
        aborted: false,
        result: {
          r: 0.97,
          lag_s: 0.25,
          pace_delta_bpm: 1.5,
          duration_s: 40,
          input_features: {},
          target_features: {},
        },
      }),
    );
    expect(done.type).toBe("trial_result");
    if (done.type !== "trial_result") return;
    expect(done.aborted).toBe(false);
    expect(done.result).toEqual({
      r: 0.97,
      lag_s: 0.25,
      pace_delta_bpm: 1.5,
      duration_s: 40,
    });
  });

  it("parses errors and bye", () => {
    expect(
      parseServerMessage(JSON.stringify({ type: "error", message: "nope" })),
    ).toEqual({ type: "error", message: "nope" });
    expect(
      parseServerMessage(
        JSON.stringify({ type: "bye", stream_id: 1, t_us: 9 }),
      ),
    ).toEqual({ type: "bye", stream_id: 1, t_us: 9 });
  });

  it("rejects junk in one place", () => {
    expect(() => parseServerMessage("{not json")).toThrow(ProtocolError);
    expect(() => parseServerMessage("42")).toThrow(ProtocolError);
    expect(() => parseServerMessage('"hi"')).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ type: "telepathy" })),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ type: "score", t_s: "soon" })),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ type: "ack", stream_id: 1, t_us: 0 })),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(
        JSON.stringify({
          type: "sample_batch",
          stream_id: 2,
          t_us: 0,
          values: [0.1, "x"],
        }),
      ),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ type: "trial_result", result: null })),
    ).toThrow(ProtocolError);
  });

  it("round trips every client message type through the field checks", () => {
    // the server mirrors these shapes back on the observer socket
    for (const text of [sampleBatch(0, [0.5]), bye(1)]) {
      const doc = JSON.parse(text);
      expect(parseServerMessage(text)).toMatchObject(doc);
    }
  });
});
