/** Main-thread UI: bundle loading, microphone capture, the threshold
 * slider, posterior bars, and the event log. All feature extraction and
 * model inference happens in the worker; the audio thread only copies
 * capture buffers; this thread only renders.
 *
 * Capture chunks flow through a bounded queue into the worker, one chunk
 * in flight at a time. Under pressure the oldest queued chunk is dropped
 * and the drop is logged and counted in the UI.
 */

import { StreamResampler } from "./resample.js";

const MAX_QUEUE_CHUNKS = 16;
const SEND_SAMPLES = 2048;

interface WorkerEvent {
  timeS: number;
  wordTimes: number[];
  score: number;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

const statusLine = el<HTMLDivElement>("status");
const bundleUrlInput = el<HTMLInputElement>("bundle-url");
const loadButton = el<HTMLButtonElement>("load");
const thetaSlider = el<HTMLInputElement>("theta");
const thetaValue = el<HTMLSpanElement>("theta-value");
const startButton = el<HTMLButtonElement>("start");
const stopButton = el<HTMLButtonElement>("stop");
const wavInput = el<HTMLInputElement>("wav-input");
const barsBox = el<HTMLDivElement>("bars");
const banner = el<HTMLDivElement>("banner");
const eventList = el<HTMLUListElement>("events");
const droppedCounter = el<HTMLSpanElement>("dropped");

const worker = new Worker("./dist/worker.js", { type: "module" });

let labels: string[] = [];
let bundleRate = 16000;
let loaded = false;

let audioContext: AudioContext | null = null;
let mediaStream: MediaStream | null = null;
let resampler: StreamResampler | null = null;

let queue: Float32Array[] = [];
let workerBusy = false;
let pending: number[] = [];
let droppedSamples = 0;

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "error" : "";
}

function sendChunk(chunk: Float32Array): void {
  workerBusy = true;
  worker.postMessage({ type: "audio", samples: chunk.buffer }, [chunk.buffer]);
}

function enqueue(chunk: Float32Array): void {
  if (!loaded || chunk.length === 0) return;
  if (!workerBusy && queue.length === 0) {
    sendChunk(chunk);
    return;
  }
  queue.push(chunk);
  if (queue.length > MAX_QUEUE_CHUNKS) {
    const dropped = queue.shift();
    if (dropped !== undefined) {
      droppedSamples += dropped.length;
      droppedCounter.textContent = String(droppedSamples);
      console.warn(
        `inference behind capture: dropped ${dropped.length} samples ` +
          `(${droppedSamples} total)`,
      );
    }
  }
}

function pumpQueue(): void {
  workerBusy = false;
  const next = queue.shift();
  if (next !== undefined) {
    sendChunk(next);
  }
}

function pushCaptured(raw: Float32Array): void {
  const converted = resampler !== null ? resampler.process(raw) : raw;
  for (let i = 0; i < converted.length; i++) {
    pending.push(converted[i]);
    if (pending.length >= SEND_SAMPLES) {
      enqueue(Float32Array.from(pending));
      pending = [];
    }
  }
}

function renderBars(probs: Float64Array): void {
  const rows = barsBox.querySelectorAll<HTMLDivElement>(".bar-fill");
  const values = barsBox.querySelectorAll<HTMLSpanElement>(".bar-value");
  for (let i = 0; i < labels.length && i < probs.length; i++) {
    rows[i].style.width = `${(probs[i] * 100).toFixed(1)}%`;
    values[i].textContent = probs[i].toFixed(3);
  }
}

function buildBars(): void {
  barsBox.innerHTML = "";
  for (const label of labels) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const name = document.createElement("span");
    name.className = "bar-label";
    name.textContent = label;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    track.appendChild(fill);
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = "0.000";
    row.append(name, track, value);
    barsBox.appendChild(row);
  }
}

function formatEvent(event: WorkerEvent): string {
  const words = event.wordTimes.map((t) => t.toFixed(2)).join(", ");
  return `[${event.timeS.toFixed(2)} s] score ${event.score.toFixed(3)}, words at ${words} s`;
}

function appendEvent(event: WorkerEvent): void {
  const item = document.createElement("li");
  item.textContent = formatEvent(event);
  eventList.prepend(item);
  banner.textContent = `Detected at ${event.timeS.toFixed(2)} s`;
  banner.classList.add("fired");
  window.setTimeout(() => banner.classList.remove("fired"), 1200);
}

function replaceEvents(events: WorkerEvent[]): void {
  eventList.innerHTML = "";
  for (const event of events) {
    const item = document.createElement("li");
    item.textContent = formatEvent(event);
    eventList.prepend(item);
  }
}

worker.onmessage = (message: MessageEvent) => {
  const data = message.data as Record<string, unknown>;
  switch (data.type as string) {
    case "loaded": {
      labels = data.labels as string[];
      bundleRate = data.sampleRate as number;
      loaded = true;
      const vocabulary = data.vocabulary as string[];
      const phrase = vocabulary.length > 0 ? `"${vocabulary.join(" ")}"` : "none (classifier)";
      setStatus(
        `Loaded: ${data.parameterCount} parameters, ${labels.length} labels, ` +
          `${bundleRate} Hz, wake phrase ${phrase}`,
      );
      buildBars();
      startButton.disabled = vocabulary.length === 0;
      wavInput.disabled = vocabulary.length === 0;
      break;
    }
    case "load-error": {
      loaded = false;
      setStatus(`Bundle load failed: ${data.message}`, true);
      break;
    }
    case "frame": {
      renderBars(data.probs as Float64Array);
      break;
    }
    case "event": {
      appendEvent(data.event as WorkerEvent);
      break;
    }
    case "redecode": {
      replaceEvents(data.events as WorkerEvent[]);
      break;
    }
    case "ready": {
      pumpQueue();
      break;
    }
    default:
      break;
  }
};

loadButton.addEventListener("click", () => {
  void (async () => {
    setStatus("Loading bundle...");
    const base = bundleUrlInput.value.endsWith("/")
      ? bundleUrlInput.value
      : `${bundleUrlInput.value}/`;
    try {
      const manifestResp = await fetch(`${base}manifest.json`);
      if (!manifestResp.ok) throw new Error(`manifest.json: HTTP ${manifestResp.status}`);
      const manifestText = await manifestResp.text();
      const blobResp = await fetch(`${base}params.bin`);
      if (!blobResp.ok) throw new Error(`params.bin: HTTP ${blobResp.status}`);
      const blob = await blobResp.arrayBuffer();
      worker.postMessage({ type: "load", manifestText, blob }, [blob]);
    } catch (err) {
      setStatus(`Bundle load failed: ${(err as Error).message}`, true);
    }
  })();
});

thetaSlider.addEventListener("input", () => {
  const theta = Number(thetaSlider.value);
  thetaValue.textContent = theta.toFixed(2);
  worker.postMessage({ type: "set-theta", theta });
});

startButton.addEventListener("click", () => {
  void (async () => {
    if (!loaded) return;
    try {
      mediaStream = await navigator.mediaDevices.getUserMedia({
        audio: { channelCount: 1, echoCancellation: false, noiseSuppression: false },
      });
    } catch {
      setStatus(
        "Microphone permission denied. Allow microphone access for this page " +
          "and press Start again (or inject a WAV file below).",
        true,
      );
      return;
    }
    audioContext = new AudioContext({ sampleRate: bundleRate });
    await audioContext.audioWorklet.addModule("./dist/capture-worklet.js");
    const actualRate = audioContext.sampleRate;
    resampler = actualRate === bundleRate ? null : new StreamResampler(actualRate, bundleRate);
    worker.postMessage({ type: "reset" });
    queue = [];
    pending = [];
    const source = audioContext.createMediaStreamSource(mediaStream);
    const capture = new AudioWorkletNode(audioContext, "capture");
    const sink = audioContext.createGain();
    sink.gain.value = 0;
    source.connect(capture);
    capture.connect(sink);
    sink.connect(audioContext.destination);
    capture.port.onmessage = (event: MessageEvent) => {
      pushCaptured(event.data as Float32Array);
    };
    const rateNote =
      resampler === null
        ? `${bundleRate} Hz`
        : `${actualRate} Hz, resampling to ${bundleRate} Hz`;
    setStatus(`Listening (${rateNote}). Speak the wake phrase.`);
    startButton.disabled = true;
    stopButton.disabled = false;
  })();
});

stopButton.addEventListener("click", () => {
  if (mediaStream !== null) {
    for (const track of mediaStream.getTracks()) track.stop();
    mediaStream = null;
  }
  if (audioContext !== null) {
    void audioContext.close();
    audioContext = null;
  }
  startButton.disabled = false;
  stopButton.disabled = true;
  setStatus("Stopped.");
});

wavInput.addEventListener("change", () => {
  void (async () => {
    const file = wavInput.files?.[0];
    if (file === undefined || !loaded) return;
    const bytes = await file.arrayBuffer();
    const decodeContext = new AudioContext();
    try {
      const decoded = await decodeContext.decodeAudioData(bytes);
      const channel = decoded.getChannelData(0);
      const converter =
        decoded.sampleRate === bundleRate
          ? null
          : new StreamResampler(decoded.sampleRate, bundleRate);
      const samples = converter === null ? channel : converter.process(channel);
      worker.postMessage({ type: "reset" });
      queue = [];
      pending = [];
      for (let start = 0; start < samples.length; start += SEND_SAMPLES) {
        enqueue(samples.slice(start, start + SEND_SAMPLES));
      }
      setStatus(`Injected ${file.name}: ${(samples.length / bundleRate).toFixed(1)} s of audio.`);
    } catch (err) {
      setStatus(`Could not decode ${file.name}: ${(err as Error).message}`, true);
    } finally {
      void decodeContext.close();
    }
  })();
});

setStatus("Load a bundle to begin.");
thetaValue.textContent = Number(thetaSlider.value).toFixed(2);
