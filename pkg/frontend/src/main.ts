// Studio page wiring: pick a pattern and modality, breathe with the
// pointer or the space bar, watch the live score.

import { KeyholdBreather, guideValue, pointerToBreathing } from "./breathing.js";
import { AudioFeedback, Modality, renderFeedback } from "./feedback.js";
import type { TrialConfig } from "./protocol.js";
import { InputMode, TrialClient, scoreLabel } from "./trial.js";

const PATTERNS = [
  "Baseline",
  "Fast",
  "Slow",
  "Plus",
  "Minus",
  "Slow+HoldIn",
  "Slow+HoldOut",
  "Fast+Deep",
  "Fast+Shallow",
  "Variable",
];

const SAMPLE_RATE_HZ = 24;
const TRIAL_DURATION_S = 40;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/`;
}

class Studio {
  private client: TrialClient | null = null;
  private ticker: number | null = null;
  private breather = new KeyholdBreather();
  private audio = new AudioFeedback();
  private spaceHeld = false;
  private pointerY = 0;
  private results: object[] = [];

  private patternSel = el<HTMLSelectElement>("pattern");
  private modalitySel = el<HTMLSelectElement>("modality");
  private modeSel = el<HTMLSelectElement>("mode");
  private startBtn = el<HTMLButtonElement>("start");
  private downloadBtn = el<HTMLButtonElement>("download");
  private banner = el("banner");
  private scoreEl = el("score");
  private progressEl = el("progress");
  private statusEl = el("status");
  private disc = el("disc");
  private guide = el("guide");
  private hapticBar = el("haptic-bar");
  private resultEl = el("result");

  constructor() {
    for (const name of PATTERNS) {
      const opt = document.createElement("option");
      opt.value = opt.textContent = name;
      this.patternSel.appendChild(opt);
    }
    this.startBtn.addEventListener("click", () => this.runTrial());
    this.downloadBtn.addEventListener("click", () => this.download());
    window.addEventListener("pointermove", (e) => (this.pointerY = e.clientY));
    window.addEventListener("keydown", (e) => {
      if (e.code === "Space") {
        this.spaceHeld = true;
        e.preventDefault();
      }
    });
    window.addEventListener("keyup", (e) => {
      if (e.code === "Space") this.spaceHeld = false;
    });
  }

  private sampleInput(mode: InputMode, dtS: number): number {
    if (mode === "pointer") {
      return pointerToBreathing(this.pointerY, window.innerHeight);
    }
    return this.breather.step(this.spaceHeld, dtS);
  }

  private async runTrial(): Promise<void> {
    if (this.client?.state.activeTrial) return; // one at a time
    const mode = this.modeSel.value as InputMode;
    const modality = this.modalitySel.value as Modality;
    const config: TrialConfig = {
      pattern: this.patternSel.value,
      sample_rate_hz: SAMPLE_RATE_HZ,
      duration_s: TRIAL_DURATION_S,
      seed: Math.floor(Math.random() * 1e6),
    };

    const socket = new WebSocket(wsUrl());
    const client = new TrialClient(socket, config, modality, mode, {
      onFeedback: (_t, triple) =>
        renderFeedback(
          { disc: this.disc, hapticBar: this.hapticBar, audio: this.audio },
          modality,
          triple,
        ),
      onStateChange: (s) => {
        this.banner.textContent = s.banner ?? "";
        this.statusEl.textContent = s.connection;
        this.scoreEl.textContent = scoreLabel(s.liveScore);
      },
    });
    this.client = client;
    this.resultEl.textContent = "";
    if (modality === "audio") this.audio.start();

    try {
      await client.start();
    } catch (e) {
      this.banner.textContent = `trial refused: ${(e as Error).message}`;
      socket.close();
      return;
    }

    this.breather = new KeyholdBreather();
    const dt = 1 / SAMPLE_RATE_HZ;
    const total = TRIAL_DURATION_S * SAMPLE_RATE_HZ;
    let sent = 0;
    const t0 = performance.now();

    this.ticker = window.setInterval(() => {
      // catch up to the wall clock so the stream stays at 24 Hz even
      // when timers are throttled
      const due = Math.min(
        total,
        Math.floor(((performance.now() - t0) / 1000) * SAMPLE_RATE_HZ),
      );
      while (sent < due) {
        client.pushSample(this.sampleInput(mode, dt));
        sent += 1;
      }
      this.progressEl.style.width = `${client.progress * 100}%`;
      if (client.target) {
        const g = guideValue(client.target, client.elapsedS);
        this.guide.style.transform = `scale(${0.4 + 0.6 * g})`;
      }
      if (sent >= total) this.endTrial(socket);
    }, 1000 / SAMPLE_RATE_HZ);
  }

  private async endTrial(socket: WebSocket): Promise<void> {
    if (this.ticker !== null) {
      clearInterval(this.ticker);
      this.ticker = null;
    }
    const client = this.client;
    if (!client) return;
    try {
      const verdict = await client.finish();
      if (verdict.aborted || !verdict.result) {
        this.resultEl.textContent = "trial aborted, no score recorded";
      } else {
        this.resultEl.textContent =
          `final r ${verdict.result.r.toFixed(3)}, ` +
          `lag ${verdict.result.lag_s.toFixed(2)} s`;
        this.results.push({ config: client.config, ...verdict.result });
      }
    } catch (e) {
      this.resultEl.textContent = (e as Error).message;
    } finally {
      this.audio.setGain(0);
      socket.close();
    }
  }

  private download(): void {
    const lines = this.results.map((r) => JSON.stringify(r)).join("\n");
    const url = URL.createObjectURL(
      new Blob([lines + "\n"], { type: "application/jsonl" }),
    );
    const a = document.createElement("a");
    a.href = url;
    a.download = "trial-results.jsonl";
    a.click();
    URL.revokeObjectURL(url);
  }
}

window.addEventListener("load", () => new Studio());
