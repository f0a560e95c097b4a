/** Inference worker: owns the posterior engine, smoother, and phrase
 * decoder so the UI thread only renders.
 *
 * Protocol (main -> worker):
 *   {type:"load", manifestText, blob}           parse + validate a bundle
 *   {type:"config", theta, windowS, strideS, smoothK, tauS, refractoryS}
 *                                               (re)build the pipeline
 *   {type:"set-theta", theta}                   re-decode retained frames
 *   {type:"audio", samples: ArrayBuffer}        float32 chunk at bundle rate
 *   {type:"reset"}                              clear stream state
 *
 * Worker -> main: "loaded" | "load-error" | "frame" | "event" | "redecode"
 * | "ready" (flow control: sent after each audio chunk is finished).
 */

import { Bundle, BundleLoadError, parseBundle } from "./bundle.js";
import { DetectionEvent, PhraseDecoder, PosteriorFrame, Smoother } from "./decoder.js";
import {
  DEFAULT_REFRACTORY_S,
  DEFAULT_SMOOTH_K,
  DEFAULT_STRIDE_S,
  DEFAULT_TAU_S,
  DEFAULT_WINDOW_S,
  PosteriorEngine,
} from "./engine.js";

interface WorkerScope {
  postMessage(message: unknown, transfer?: Transferable[]): void;
  onmessage: ((event: MessageEvent) => void) | null;
}

const scope = self as unknown as WorkerScope;

const RETAIN_FRAMES = 600; // ~2 min of smoothed frames at the default stride

interface PipelineConfig {
  theta: number;
  windowS: number;
  strideS: number;
  smoothK: number;
  tauS: number;
  refractoryS: number;
}

let bundle: Bundle | null = null;
let config: PipelineConfig = {
  theta: 0.5,
  windowS: DEFAULT_WINDOW_S,
  strideS: DEFAULT_STRIDE_S,
  smoothK: DEFAULT_SMOOTH_K,
  tauS: DEFAULT_TAU_S,
  refractoryS: DEFAULT_REFRACTORY_S,
};
let engine: PosteriorEngine | null = null;
let smoother: Smoother | null = null;
let decoder: PhraseDecoder | null = null;
let retained: PosteriorFrame[] = [];

function rebuild(): void {
  if (bundle === null) return;
  engine = new PosteriorEngine(bundle, config.windowS, config.strideS);
  smoother = new Smoother(config.smoothK);
  decoder =
    bundle.vocabulary.length > 0
      ? new PhraseDecoder(bundle.vocabulary.length, config.theta, config.tauS, config.refractoryS)
      : null;
  retained = [];
}

scope.onmessage = (message: MessageEvent) => {
  const data = message.data as Record<string, unknown>;
  switch (data.type as string) {
    case "load": {
      try {
        bundle = parseBundle(data.manifestText as string, new Uint8Array(data.blob as ArrayBuffer));
        rebuild();
        scope.postMessage({
          type: "loaded",
          labels: bundle.labels,
          vocabulary: bundle.vocabulary,
          sampleRate: bundle.frontend.sample_rate,
          parameterCount: bundle.parameterCount,
        });
      } catch (err) {
        const reason =
          err instanceof BundleLoadError ? err.message : `unexpected: ${(err as Error).message}`;
        scope.postMessage({ type: "load-error", message: reason });
      }
      break;
    }
    case "config": {
      config = { ...config, ...(data as unknown as Partial<PipelineConfig>) };
      rebuild();
      break;
    }
    case "set-theta": {
      config.theta = data.theta as number;
      if (decoder !== null && bundle !== null) {
        // replay the retained frames through a fresh decoder, so the event
        // log reflects the new threshold without losing the audio stream
        decoder = new PhraseDecoder(
          bundle.vocabulary.length,
          config.theta,
          config.tauS,
          config.refractoryS,
        );
        const events: DetectionEvent[] = [];
        for (const frame of retained) {
          const event = decoder.step(frame);
          if (event !== null) events.push(event);
        }
        scope.postMessage({ type: "redecode", events });
      }
      break;
    }
    case "audio": {
      if (engine !== null && smoother !== null) {
        const samples = new Float32Array(data.samples as ArrayBuffer);
        for (const raw of engine.feed(samples)) {
          const frame: PosteriorFrame = { timeS: raw.timeS, probs: smoother.push(raw.probs) };
          retained.push(frame);
          if (retained.length > RETAIN_FRAMES) retained.shift();
          const probsCopy = frame.probs.slice();
          scope.postMessage({ type: "frame", timeS: frame.timeS, probs: probsCopy }, [
            probsCopy.buffer,
          ]);
          if (decoder !== null) {
            const event = decoder.step(frame);
            if (event !== null) {
              scope.postMessage({ type: "event", event });
            }
          }
        }
      }
      scope.postMessage({ type: "ready" });
      break;
    }
    case "reset": {
      rebuild();
      break;
    }
    default:
      break;
  }
};
