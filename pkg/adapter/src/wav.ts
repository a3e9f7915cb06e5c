import {readFileSync} from 'node:fs';

export interface WavAudio {
  sampleRate: number;
  /** mono samples in [-1, 1] */
  samples: Float64Array;
}

export class WavError extends Error {}

/**
 * Minimal RIFF/WAVE reader for PCM16 files. Multi-channel input is
 * averaged down to mono; compressed formats are rejected.
 */
export function readWav(path: string): WavAudio {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (e) {
    throw new WavError(`cannot read audio file ${path}: ${(e as Error).message}`);
  }
  if (buf.length < 44 || buf.toString('ascii', 0, 4) !== 'RIFF' ||
      buf.toString('ascii', 8, 12) !== 'WAVE') {
    throw new WavError(`${path}: not a RIFF/WAVE file`);
  }
  let fmt: {channels: number; sampleRate: number; bits: number} | null = null;
  let data: Buffer | null = null;
  let off = 12;
  while (off + 8 <= buf.length) {
    const id = buf.toString('ascii', off, off + 4);
    const size = buf.readUInt32LE(off + 4);
    const body = buf.subarray(off + 8, off + 8 + size);
    if (id === 'fmt ') {
      const format = body.readUInt16LE(0);
      if (format !== 1) {
        throw new WavError(`${path}: unsupported WAV format code ${format} (want PCM)`);
      }
      fmt = {
        channels: body.readUInt16LE(2),
        sampleRate: body.readUInt32LE(4),
        bits: body.readUInt16LE(14),
      };
    } else if (id === 'data') {
      data = body;
    }
    // chunks are word-aligned
    off += 8 + size + (size % 2);
  }
  if (!fmt || !data) {
    throw new WavError(`${path}: missing fmt or data chunk`);
  }
  if (fmt.bits !== 16) {
    throw new WavError(`${path}: only 16-bit PCM supported, got ${fmt.bits}`);
  }
  const frames = Math.floor(data.length / 2 / fmt.channels);
  const samples = new Float64Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let c = 0; c < fmt.channels; c++) {
      acc += data.readInt16LE((i * fmt.channels + c) * 2) / 32768;
    }
    samples[i] = acc / fmt.channels;
  }
  return {sampleRate: fmt.sampleRate, samples};
}

/** Encode mono float samples as a PCM16 WAV buffer (test/demo helper). */
export function encodeWav(samples: ArrayLike<number>, sampleRate: number): Buffer {
  const data = Buffer.alloc(samples.length * 2);
  for (let i = 0; i < samples.length; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    data.writeInt16LE(Math.round(v * 32767), i * 2);
  }
  const buf = Buffer.alloc(44 + data.length);
  buf.write('RIFF', 0, 'ascii');
  buf.writeUInt32LE(36 + data.length, 4);
  buf.write('WAVE', 8, 'ascii');
  buf.write('fmt ', 12, 'ascii');
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(1, 22); // mono
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write('data', 36, 'ascii');
  buf.writeUInt32LE(data.length, 40);
  data.copy(buf, 44);
  return buf;
}
