// Turning server feedback triples into something a human can follow.
// The server already encodes brightness/gain/haptic; this side only
// applies them to DOM and Web Audio, it never rescales.

export type Modality = "visual" | "audio" | "haptic";

export function applyVisual(disc: HTMLElement, brightness: number): void {
  disc.style.opacity = String(brightness);
}

export function applyHaptic(bar: HTMLElement, intensity: number): void {
  bar.style.width = `${Math.round(intensity * 100)}%`;
}

/**
 * Pink-ish noise bed with a live gain node. The noise buffer is a few
 * seconds of filtered white noise (Paul Kellet's economy filter),
 * looped; the server's gain value lands directly on the GainNode.
 */
export class AudioFeedback {
  private ctx: AudioContext | null = null;
  private gain: GainNode | null = null;

  start(): void {
    if (typeof AudioContext === "undefined" || this.ctx) return;
    this.ctx = new AudioContext();
    this.gain = this.ctx.createGain();
    this.gain.gain.value = 0;
    this.gain.connect(this.ctx.destination);

    const seconds = 4;
    const buf = this.ctx.createBuffer(
      1,
      this.ctx.sampleRate * seconds,
      this.ctx.sampleRate,
    );
    const data = buf.getChannelData(0);
    let b0 = 0;
    let b1 = 0;
    let b2 = 0;
    for (let i = 0; i < data.length; i++) {
      const white = Math.random() * 2 - 1;
      b0 = 0.99765 * b0 + white * 0.099046;
      b1 = 0.963 * b1 + white * 0.2965164;
      b2 = 0.57 * b2 + white * 1.0526913;
      data[i] = (b0 + b1 + b2 + white * 0.1848) * 0.2;
    }
    const src = this.ctx.createBufferSource();
    src.buffer = buf;
    src.loop = true;
    src.connect(this.gain);
    src.start();
  }

  setGain(g: number): void {
    if (this.gain) this.gain.gain.value = g;
  }

  stop(): void {
    this.setGain(0);
    this.ctx?.close();
    this.ctx = null;
    this.gain = null;
  }
}

export interface FeedbackTargets {
  disc: HTMLElement;
  hapticBar: HTMLElement;
  audio: AudioFeedback;
}

/** Route one (brightness, gain, haptic) triple to the active modality. */
export function renderFeedback(
  targets: FeedbackTargets,
  modality: Modality,
  triple: [number, number, number],
): void {
  const [brightness, gain, haptic] = triple;
  if (modality === "visual") applyVisual(targets.disc, brightness);
  else if (modality === "audio") targets.audio.setGain(gain);
  else applyHaptic(targets.hapticBar, haptic);
}
