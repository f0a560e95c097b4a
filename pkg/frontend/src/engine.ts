/** Streaming inference: sliding-window posteriors over a continuous sample
 * stream, and the end-to-end detector (posteriors -> smoothing -> phrase
 * decoding).
 *
 * The engine tracks absolute sample position in a ring buffer, so feeding
 * is chunking-invariant: any split of the same stream yields identical
 * frames. The normalized window is rounded to float32 before the forward
 * pass, matching the training engine's input precision.
 */

import { Bundle } from "./bundle.js";
import { PhraseDecoder, PosteriorFrame, DetectionEvent, Smoother } from "./decoder.js";
import { applyStats, MelFrontend } from "./frontend.js";

export const DEFAULT_WINDOW_S = 2.0;
export const DEFAULT_STRIDE_S = 0.2;
export const DEFAULT_SMOOTH_K = 4;
export const DEFAULT_TAU_S = 1.5;
export const DEFAULT_REFRACTORY_S = 1.0;

/** Python-compatible round (banker's rounding at exact .5 ties). */
export function pyRound(x: number): number {
  const floor = Math.floor(x);
  const diff = x - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

export class PosteriorEngine {
  readonly bundle: Bundle;
  readonly sampleRate: number;
  readonly window: number;
  readonly stride: number;
  private readonly frontend: MelFrontend;
  private readonly capacity: number;
  private readonly ring: Float64Array;
  private total = 0;
  private nextEnd: number;
  private readonly windowBuf: Float64Array;

  constructor(bundle: Bundle, windowS = DEFAULT_WINDOW_S, strideS = DEFAULT_STRIDE_S) {
    this.bundle = bundle;
    this.sampleRate = bundle.frontend.sample_rate;
    this.window = pyRound(windowS * this.sampleRate);
    this.stride = pyRound(strideS * this.sampleRate);
    if (this.window < bundle.frontend.win) {
      throw new Error(
        `window of ${windowS}s is shorter than one analysis frame (${bundle.frontend.win} samples)`,
      );
    }
    if (this.stride < 1) {
      throw new Error(`stride of ${strideS}s is below one sample`);
    }
    this.frontend = new MelFrontend(bundle.frontend);
    this.capacity = this.window + this.stride;
    this.ring = new Float64Array(this.capacity);
    this.nextEnd = this.window;
    this.windowBuf = new Float64Array(this.window);
  }

  /** Append samples (already at the bundle's rate); return every completed
   * posterior frame. */
  feed(samples: Float64Array | Float32Array): PosteriorFrame[] {
    const frames: PosteriorFrame[] = [];
    let i = 0;
    while (i < samples.length) {
      const take = Math.min(this.nextEnd - this.total, samples.length - i);
      this.write(samples, i, take);
      i += take;
      if (this.total === this.nextEnd) {
        frames.push(this.emit());
        this.nextEnd += this.stride;
      }
    }
    return frames;
  }

  private write(samples: Float64Array | Float32Array, from: number, count: number): void {
    let pos = this.total % this.capacity;
    for (let i = 0; i < count; i++) {
      this.ring[pos] = samples[from + i];
      pos += 1;
      if (pos === this.capacity) pos = 0;
    }
    this.total += count;
  }

  private emit(): PosteriorFrame {
    let start = (this.total - this.window) % this.capacity;
    for (let i = 0; i < this.window; i++) {
      this.windowBuf[i] = this.ring[start];
      start += 1;
      if (start === this.capacity) start = 0;
    }
    const mel = this.frontend.compute(this.windowBuf);
    if (this.bundle.stats !== null) {
      applyStats(mel, this.bundle.stats);
    }
    for (let i = 0; i < mel.data.length; i++) {
      mel.data[i] = Math.fround(mel.data[i]);
    }
    const logProbs = this.bundle.model.forward(mel.data, mel.rows, mel.cols);
    const probs = new Float64Array(logProbs.length);
    for (let i = 0; i < probs.length; i++) {
      probs[i] = Math.exp(logProbs[i]);
    }
    return { timeS: this.total / this.sampleRate, probs };
  }
}

export interface DetectorOptions {
  windowS?: number;
  strideS?: number;
  smoothK?: number;
  tauS?: number;
  refractoryS?: number;
}

export interface DetectorOutput {
  frames: PosteriorFrame[]; // smoothed, one per stride
  events: DetectionEvent[];
}

export class Detector {
  readonly engine: PosteriorEngine;
  private readonly smoother: Smoother;
  private readonly decoder: PhraseDecoder;

  constructor(bundle: Bundle, theta: number, options: DetectorOptions = {}) {
    if (bundle.vocabulary.length === 0) {
      throw new Error("bundle has no vocabulary; nothing to detect");
    }
    this.engine = new PosteriorEngine(
      bundle,
      options.windowS ?? DEFAULT_WINDOW_S,
      options.strideS ?? DEFAULT_STRIDE_S,
    );
    this.smoother = new Smoother(options.smoothK ?? DEFAULT_SMOOTH_K);
    this.decoder = new PhraseDecoder(
      bundle.vocabulary.length,
      theta,
      options.tauS ?? DEFAULT_TAU_S,
      options.refractoryS ?? DEFAULT_REFRACTORY_S,
    );
  }

  /** Append samples; return the smoothed frames they complete and the
   * events those frames fire. */
  feed(samples: Float64Array | Float32Array): DetectorOutput {
    const frames: PosteriorFrame[] = [];
    const events: DetectionEvent[] = [];
    for (const raw of this.engine.feed(samples)) {
      const smoothed: PosteriorFrame = { timeS: raw.timeS, probs: this.smoother.push(raw.probs) };
      frames.push(smoothed);
      const event = this.decoder.step(smoothed);
      if (event !== null) {
        events.push(event);
      }
    }
    return { frames, events };
  }
}
