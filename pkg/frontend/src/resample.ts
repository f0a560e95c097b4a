/** Streaming linear resampler for the microphone-rate fallback.
 *
 * Browsers may refuse the requested AudioContext rate and deliver capture
 * at 44.1/48 kHz; this converts chunks to the bundle's rate while tracking
 * fractional position across chunk boundaries. Linear interpolation is
 * plenty for speech-band features; the offline training pipeline's
 * windowed-sinc resampler stays the reference for file-based work.
 */

export class StreamResampler {
  readonly sourceRate: number;
  readonly targetRate: number;
  private readonly step: number;
  private position = 0; // absolute source position of the next output sample
  private totalIn = 0; // source samples consumed so far
  private tail = new Float64Array(0); // retained trailing source samples

  constructor(sourceRate: number, targetRate: number) {
    if (sourceRate <= 0 || targetRate <= 0) {
      throw new Error(`rates must be positive, got ${sourceRate} -> ${targetRate}`);
    }
    this.sourceRate = sourceRate;
    this.targetRate = targetRate;
    this.step = sourceRate / targetRate;
  }

  /** Convert one capture chunk; output length varies by +-1 sample as the
   * fractional position advances. */
  process(chunk: Float32Array): Float32Array {
    if (this.step === 1) {
      this.totalIn += chunk.length;
      return chunk.slice();
    }
    const merged = new Float64Array(this.tail.length + chunk.length);
    merged.set(this.tail, 0);
    for (let i = 0; i < chunk.length; i++) {
      merged[this.tail.length + i] = chunk[i];
    }
    const mergedStart = this.totalIn - this.tail.length;
    this.totalIn += chunk.length;
    const lastIndex = mergedStart + merged.length - 1;
    const out: number[] = [];
    while (Math.floor(this.position) + 1 <= lastIndex) {
      const i = Math.floor(this.position);
      const frac = this.position - i;
      const s0 = merged[i - mergedStart];
      const s1 = merged[i - mergedStart + 1];
      out.push(s0 + (s1 - s0) * frac);
      this.position += this.step;
    }
    // keep everything the next output could still interpolate over
    const keepFrom = Math.max(mergedStart, Math.min(Math.floor(this.position), lastIndex + 1));
    this.tail = merged.slice(keepFrom - mergedStart);
    return Float32Array.from(out);
  }
}
