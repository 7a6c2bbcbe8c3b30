// Breathing proxies: ways to produce a [0,1] breathing signal without
// a chest sensor, plus the guide animation math.

import type { TargetSpec } from "./protocol.js";

function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

/** Pointer height to breathing: top of the viewport is fully inhaled. */
export function pointerToBreathing(
  pointerY: number,
  viewportHeight: number,
): number {
  if (!(viewportHeight > 0)) {
    throw new RangeError("viewport height must be positive");
  }
  return clamp01(1 - pointerY / viewportHeight);
}

/**
 * Space-bar breathing: value eases toward 1 while the key is held and
 * back toward 0 when released. First-order lag on both edges, a bit
 * slower on the way out to feel like exhaling.
 */
export class KeyholdBreather {
  value = 0;
  constructor(
    private riseTauS = 0.9,
    private fallTauS = 1.3,
  ) {}

  step(held: boolean, dtS: number): number {
    if (dtS < 0) throw new RangeError("dt must be >= 0");
    const target = held ? 1 : 0;
    const tau = held ? this.riseTauS : this.fallTauS;
    const k = 1 - Math.exp(-dtS / tau);
    this.value = clamp01(this.value + (target - this.value) * k);
    return this.value;
  }
}

/** Replays a prerecorded stream, one sample per tick; holds the last
 * value if asked past the end. */
export class ReplaySource {
  private i = 0;
  constructor(private samples: readonly number[]) {
    if (samples.length === 0) throw new RangeError("empty replay stream");
  }

  next(): number {
    const v = this.samples[Math.min(this.i, this.samples.length - 1)];
    this.i += 1;
    return clamp01(v);
  }

  get done(): boolean {
    return this.i >= this.samples.length;
  }
}

/**
 * Deterministic guide value for displaying the target pattern: raised
 * cosine up over the inhale, plateau, raised cosine down, plateau.
 * Display only; all scoring happens server-side.
 */
export function guideValue(target: TargetSpec, tS: number): number {
  const cycle =
    target.inhale_s + target.hold_in_s + target.exhale_s + target.hold_out_s;
  let p = tS % cycle;
  if (p < 0) p += cycle;
  const a = target.amplitude;
  if (p < target.inhale_s) {
    return (a * (1 - Math.cos(Math.PI * (p / target.inhale_s)))) / 2;
  }
  p -= target.inhale_s;
  if (p < target.hold_in_s) return a;
  p -= target.hold_in_s;
  if (p < target.exhale_s) {
    return (a * (1 + Math.cos(Math.PI * (p / target.exhale_s)))) / 2;
  }
  return 0;
}
