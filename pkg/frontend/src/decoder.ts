/** Posterior smoothing and in-order phrase decoding.
 *
 * These mirror the training-side streaming decoder decision-for-decision:
 * a word triggers at a frame when its smoothed probability strictly exceeds
 * theta AND it is the frame's argmax (ties resolve to the lowest index);
 * an event fires when the final vocabulary word triggers and earlier
 * triggers complete an in-order tuple spanning at most tau seconds, taking
 * the latest trigger at each position scanning backward; firing consumes
 * all pending triggers and suppresses new ones for the refractory period.
 */

export interface PosteriorFrame {
  timeS: number;
  probs: Float64Array;
}

export interface DetectionEvent {
  timeS: number;
  wordTimes: number[];
  score: number;
}

/** Renormalized running mean of the last k probability vectors; k=1 is the
 * identity. */
export class Smoother {
  private readonly k: number;
  private readonly history: Float64Array[] = [];

  constructor(k: number) {
    if (k < 1 || !Number.isInteger(k)) {
      throw new Error(`smoothing width must be a positive integer, got ${k}`);
    }
    this.k = k;
  }

  push(probs: Float64Array): Float64Array {
    this.history.push(probs);
    if (this.history.length > this.k) {
      this.history.shift();
    }
    const mean = new Float64Array(probs.length);
    for (const row of this.history) {
      for (let i = 0; i < mean.length; i++) {
        mean[i] += row[i];
      }
    }
    let total = 0;
    for (let i = 0; i < mean.length; i++) {
      mean[i] /= this.history.length;
      total += mean[i];
    }
    for (let i = 0; i < mean.length; i++) {
      mean[i] /= total;
    }
    return mean;
  }

  reset(): void {
    this.history.length = 0;
  }
}

interface Trigger {
  t: number;
  p: number;
}

export class PhraseDecoder {
  readonly nWords: number;
  readonly theta: number;
  readonly tauS: number;
  readonly refractoryS: number;
  private pools: Trigger[][];
  private suppressUntil = -Infinity;

  constructor(nWords: number, theta: number, tauS = 1.5, refractoryS = 1.0) {
    if (nWords < 1) {
      throw new Error(`need at least one vocabulary word, got ${nWords}`);
    }
    if (tauS < 0 || refractoryS < 0) {
      throw new Error("tauS and refractoryS must be nonnegative");
    }
    this.nWords = nWords;
    this.theta = theta;
    this.tauS = tauS;
    this.refractoryS = refractoryS;
    this.pools = Array.from({ length: nWords }, () => []);
  }

  step(frame: PosteriorFrame): DetectionEvent | null {
    const probs = frame.probs;
    let word = 0;
    for (let i = 1; i < probs.length; i++) {
      if (probs[i] > probs[word]) {
        word = i;
      }
    }
    if (word >= this.nWords || probs[word] <= this.theta) {
      return null;
    }
    const t = frame.timeS;
    if (t < this.suppressUntil) {
      return null;
    }
    for (let j = 0; j < this.nWords; j++) {
      this.pools[j] = this.pools[j].filter((trig) => t - trig.t <= this.tauS);
    }
    this.pools[word].push({ t, p: probs[word] });
    if (word !== this.nWords - 1) {
      return null;
    }
    const chain: Trigger[] = [this.pools[word][this.pools[word].length - 1]];
    for (let j = this.nWords - 2; j >= 0; j--) {
      const bound = chain[chain.length - 1].t;
      let pick: Trigger | null = null;
      for (let i = this.pools[j].length - 1; i >= 0; i--) {
        if (this.pools[j][i].t < bound) {
          pick = this.pools[j][i];
          break;
        }
      }
      if (pick === null) {
        return null;
      }
      chain.push(pick);
    }
    chain.reverse();
    const event: DetectionEvent = {
      timeS: t,
      wordTimes: chain.map((trig) => trig.t),
      score: chain.reduce((lo, trig) => Math.min(lo, trig.p), Infinity),
    };
    this.pools = Array.from({ length: this.nWords }, () => []);
    this.suppressUntil = t + this.refractoryS;
    return event;
  }

  reset(): void {
    this.pools = Array.from({ length: this.nWords }, () => []);
    this.suppressUntil = -Infinity;
  }
}
