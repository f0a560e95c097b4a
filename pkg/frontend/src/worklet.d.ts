/** Ambient declarations for the AudioWorklet global scope, which the DOM
 * lib does not cover. Only what the capture processor uses. */

declare class AudioWorkletProcessor {
  readonly port: MessagePort;
  constructor();
}

declare function registerProcessor(
  name: string,
  processorCtor: new () => AudioWorkletProcessor,
): void;

declare const sampleRate: number;
