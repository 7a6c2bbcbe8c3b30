import { describe, expect, it } from "vitest";

import {
  KeyholdBreather,
  ReplaySource,
  guideValue,
  pointerToBreathing,
} from "../src/breathing.js";
import type { TargetSpec } from "../src/protocol.js";

describe("pointerToBreathing", () => {
  it("maps the top of the viewport to a full inhale", () => {
    expect(pointerToBreathing(0, 800)).toBe(1);
    expect(pointerToBreathing(800, 800)).toBe(0);
    expect(pointerToBreathing(400, 800)).toBe(0.5);
  });

  it("is linear in between", () => {
    for (let y = 0; y <= 1000; y += 100) {
      expect(pointerToBreathing(y, 1000)).toBeCloseTo(1 - y / 1000, 12);
    }
  });

  it("clamps pointers outside the viewport", () => {
    expect(pointerToBreathing(-50, 800)).toBe(1);
    expect(pointerToBreathing(900, 800)).toBe(0);
  });

  it("rejects a degenerate viewport", () => {
    expect(() => pointerToBreathing(10, 0)).toThrow(RangeError);
    expect(() => pointerToBreathing(10, -5)).toThrow(RangeError);
  });
});

describe("KeyholdBreather", () => {
  const dt = 1 / 24;

  it("rises monotonically toward 1 while held", () => {
    const b = new KeyholdBreather();
    let prev = 0;
    for (let i = 0; i < 24 * 6; i++) {
      const v = b.step(true, dt);
      expect(v).toBeGreaterThanOrEqual(prev);
      expect(v).toBeLessThanOrEqual(1);
      prev = v;
    }
    expect(prev).toBeGreaterThan(0.95);
  });

  it("falls back toward 0 when released", () => {
    const b = new KeyholdBreather();
    for (let i = 0; i < 24 * 6; i++) b.step(true, dt);
    let prev = 1;
    for (let i = 0; i < 24 * 10; i++) {
      const v = b.step(false, dt);
      expect(v).toBeLessThanOrEqual(prev);
      prev = v;
    }
    expect(prev).toBeLessThan(0.05);
  });

  it("stays inside [0,1] under erratic tapping", () => {
    const b = new KeyholdBreather();
    for (let i = 0; i < 1000; i++) {
      const v = b.step(i % 7 < 3, dt);
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
  });

  it("rejects negative time steps", () => {
    expect(() => new KeyholdBreather().step(true, -0.1)).toThrow(RangeError);
  });
});

describe("ReplaySource", () => {
  it("plays samples in order and holds the last one", () => {
    const r = new ReplaySource([0.1, 0.5, 0.9]);
    expect(r.next()).toBe(0.1);
    expect(r.next()).toBe(0.5);
    expect(r.done).toBe(false);
    expect(r.next()).toBe(0.9);
    expect(r.done).toBe(true);
    expect(r.next()).toBe(0.9);
  });

  it("clamps out-of-range recordings", () => {
    const r = new ReplaySource([-0.2, 1.4]);
    expect(r.next()).toBe(0);
    expect(r.next()).toBe(1);
  });

  it("rejects an empty stream", () => {
    expect(() => new ReplaySource([])).toThrow(RangeError);
  });
});

describe("guideValue", () => {
  const target: TargetSpec = {
    pace_bpm: 7.5,
    inhale_s: 4,
    exhale_s: 4,
    hold_in_s: 2,
    hold_out_s: 0,
    amplitude: 0.6,
    variability_frac: 0,
  };

  it("traces inhale, hold, exhale", () => {
    expect(guideValue(target, 0)).toBeCloseTo(0, 12);
    expect(guideValue(target, 2)).toBeCloseTo(0.3, 12); // halfway up
    expect(guideValue(target, 4)).toBeCloseTo(0.6, 12);
    expect(guideValue(target, 5)).toBeCloseTo(0.6, 12); // holding
    expect(guideValue(target, 8)).toBeCloseTo(0.3, 12); // halfway down
    expect(guideValue(target, 9.99)).toBeLessThan(0.01);
  });

  it("wraps around the cycle", () => {
    const cycle = 10;
    for (const t of [0.5, 3, 7, 9]) {
      expect(guideValue(target, t + cycle)).toBeCloseTo(
        guideValue(target, t),
        12,
      );
    }
  });

  it("never exceeds the amplitude", () => {
    for (let t = 0; t < 20; t += 0.05) {
      const v = guideValue(target, t);
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(0.6 + 1e-12);
    }
  });
});
