/** Log-mel feature frontend, matching the training pipeline bin-for-bin:
 * periodic Hann window, power spectrum, triangular mel filters with centers
 * uniform on the 2595*log10(1 + f/700) scale, natural log with a floor,
 * and the dataset's zero-mean/unit-variance normalization.
 *
 * Field names mirror the bundle manifest, which is the wire contract.
 */

import { RealFft } from "./fft.js";

export interface FrontendConfig {
  sample_rate: number;
  win: number;
  hop: number;
  fft_size: number;
  mel_bands: number;
  f_min: number;
  f_max: number;
  log_floor: number;
}

export interface DatasetStats {
  mean: number | number[];
  std: number | number[];
  count: number;
}

/** Row-major T x M matrix of mel frames. */
export interface MelMatrix {
  data: Float64Array;
  rows: number;
  cols: number;
}

export function melFromHz(f: number): number {
  return 2595 * Math.log10(1 + f / 700);
}

export function hzFromMel(m: number): number {
  return 700 * (Math.pow(10, m / 2595) - 1);
}

/** M x (fft_size/2+1) triangular filter weights, peak 1, flattened row-major. */
export function melFilterbank(config: FrontendConfig): Float64Array {
  const { fft_size, sample_rate, mel_bands, f_min, f_max } = config;
  if (!(f_min >= 0 && f_min < f_max && f_max <= sample_rate / 2)) {
    throw new Error(`need 0 <= f_min < f_max <= Nyquist; got [${f_min}, ${f_max}]`);
  }
  const bins = fft_size / 2 + 1;
  const loMel = melFromHz(f_min);
  const hiMel = melFromHz(f_max);
  const points = new Float64Array(mel_bands + 2);
  for (let i = 0; i < points.length; i++) {
    // linear interpolation with exact endpoints, like np.linspace
    const t = i / (mel_bands + 1);
    points[i] = i === mel_bands + 1 ? hzFromMel(hiMel) : hzFromMel(loMel + (hiMel - loMel) * t);
  }
  const weights = new Float64Array(mel_bands * bins);
  for (let m = 0; m < mel_bands; m++) {
    const lo = points[m];
    const center = points[m + 1];
    const hi = points[m + 2];
    let support = 0;
    for (let k = 0; k < bins; k++) {
      const hz = (k * sample_rate) / fft_size;
      const rising = (hz - lo) / (center - lo);
      const falling = (hi - hz) / (hi - center);
      const w = Math.max(0, Math.min(rising, falling));
      weights[m * bins + k] = w;
      support += w;
    }
    if (support === 0) {
      throw new Error(`mel band ${m} has no FFT support; reduce mel_bands or increase fft_size`);
    }
  }
  return weights;
}

export function hannWindowPeriodic(n: number): Float64Array {
  const w = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / n);
  }
  return w;
}

export class MelFrontend {
  readonly config: FrontendConfig;
  private readonly fft: RealFft;
  private readonly window: Float64Array;
  private readonly filters: Float64Array;
  private readonly frame: Float64Array;
  private readonly power: Float64Array;

  constructor(config: FrontendConfig) {
    this.config = config;
    this.fft = new RealFft(config.fft_size);
    this.window = hannWindowPeriodic(config.win);
    this.filters = melFilterbank(config);
    this.frame = new Float64Array(config.win);
    this.power = new Float64Array(config.fft_size / 2 + 1);
  }

  frameCount(nSamples: number): number {
    const { win, hop } = this.config;
    if (nSamples < win) {
      throw new Error(`clip of ${nSamples} samples is shorter than the ${win}-sample window`);
    }
    return 1 + Math.floor((nSamples - win) / hop);
  }

  /** Unnormalized log-mel frames for a sample buffer at the config rate. */
  compute(samples: Float64Array): MelMatrix {
    const { win, hop, mel_bands, log_floor } = this.config;
    const bins = this.power.length;
    const rows = this.frameCount(samples.length);
    const data = new Float64Array(rows * mel_bands);
    for (let t = 0; t < rows; t++) {
      const base = t * hop;
      for (let i = 0; i < win; i++) {
        this.frame[i] = samples[base + i] * this.window[i];
      }
      this.fft.powerSpectrum(this.frame, this.power);
      for (let m = 0; m < mel_bands; m++) {
        let acc = 0;
        const fb = m * bins;
        for (let k = 0; k < bins; k++) {
          acc += this.power[k] * this.filters[fb + k];
        }
        data[t * mel_bands + m] = Math.log(Math.max(acc, log_floor));
      }
    }
    return { data, rows, cols: mel_bands };
  }
}

/** In-place (x - mean) / std, scalar or per-band stats. */
export function applyStats(m: MelMatrix, stats: DatasetStats): void {
  if (typeof stats.mean === "number" && typeof stats.std === "number") {
    const mean = stats.mean;
    const std = stats.std;
    for (let i = 0; i < m.data.length; i++) {
      m.data[i] = (m.data[i] - mean) / std;
    }
    return;
  }
  const mean = stats.mean as number[];
  const std = stats.std as number[];
  if (mean.length !== m.cols || std.length !== m.cols) {
    throw new Error(`per-band stats of length ${mean.length} for ${m.cols} mel bands`);
  }
  for (let t = 0; t < m.rows; t++) {
    for (let c = 0; c < m.cols; c++) {
      m.data[t * m.cols + c] = (m.data[t * m.cols + c] - mean[c]) / std[c];
    }
  }
}
