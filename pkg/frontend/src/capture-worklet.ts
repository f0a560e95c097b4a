/** Audio-thread capture processor: copies each 128-sample render quantum of
 * the first input channel and posts it to the main thread. All feature and
 * model work happens off the audio thread. */

class CaptureProcessor extends AudioWorkletProcessor {
  process(inputs: Float32Array[][]): boolean {
    const channel = inputs[0]?.[0];
    if (channel && channel.length > 0) {
      const copy = new Float32Array(channel.length);
      copy.set(channel);
      this.port.postMessage(copy, [copy.buffer]);
    }
    return true;
  }
}

registerProcessor("capture", CaptureProcessor);

export {};
