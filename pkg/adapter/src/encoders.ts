import {WavAudio} from './wav.js';

export class EncoderError extends Error {}

export interface AudioEncoder {
  id: string;
  dim: number;
  frameLength: number;
  hopLength: number;
  /** per-frame feature rows; throws if the clip is shorter than one frame */
  frames(audio: WavAudio): Float64Array[];
}

export interface TextEncoder {
  id: string;
  dim: number;
  /** fixed-size vector for one caption (first-token summary) */
  encode(text: string): Float64Array;
}

// Deterministic PRNG (mulberry32) so encoder weights are a pure function
// of the encoder identifier; no bundled weight files.
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function hashString(s: string): number {
  let h = 2166136261;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 16777619);
  }
  return h >>> 0;
}

function randomBasis(key: string, rows: number, cols: number): Float64Array[] {
  const rand = mulberry32(hashString(key));
  const basis: Float64Array[] = [];
  for (let r = 0; r < rows; r++) {
    const row = new Float64Array(cols);
    for (let c = 0; c < cols; c++) {
      row[c] = rand() * 2 - 1;
    }
    basis.push(row);
  }
  return basis;
}

/**
 * Reference audio featurizer: windows the waveform and projects each
 * frame onto a deterministic random basis, with frame energy and
 * zero-crossing rate as the leading two features. Stands in for a
 * pretrained encoder's final-layer frames behind the same interface.
 */
class FrameHashAudioEncoder implements AudioEncoder {
  id = 'framehash-v1';
  dim = 16;
  frameLength = 400;
  hopLength = 160;
  private basis = randomBasis(this.id, this.dim - 2, this.frameLength);

  frames(audio: WavAudio): Float64Array[] {
    const n = audio.samples.length;
    if (n < this.frameLength) {
      throw new EncoderError(
        `audio shorter than one frame window (${n} < ${this.frameLength} samples)`);
    }
    const out: Float64Array[] = [];
    for (let start = 0; start + this.frameLength <= n; start += this.hopLength) {
      const frame = audio.samples.subarray(start, start + this.frameLength);
      const feat = new Float64Array(this.dim);
      let energy = 0;
      let crossings = 0;
      for (let i = 0; i < frame.length; i++) {
        energy += frame[i] * frame[i];
        if (i > 0 && frame[i - 1] * frame[i] < 0) crossings++;
      }
      feat[0] = Math.sqrt(energy / frame.length);
      feat[1] = crossings / frame.length;
      for (let j = 0; j < this.basis.length; j++) {
        let acc = 0;
        for (let i = 0; i < frame.length; i++) {
          acc += frame[i] * this.basis[j][i];
        }
        feat[j + 2] = acc / Math.sqrt(frame.length);
      }
      out.push(feat);
    }
    return out;
  }
}

/** Arithmetic mean over frame vectors; the clip-level speech embedding. */
export function meanPool(frames: Float64Array[]): Float64Array {
  const dim = frames[0].length;
  const out = new Float64Array(dim);
  for (const f of frames) {
    if (f.length !== dim) {
      throw new EncoderError(`inconsistent frame dims: ${f.length} vs ${dim}`);
    }
    for (let j = 0; j < dim; j++) out[j] += f[j];
  }
  for (let j = 0; j < dim; j++) out[j] /= frames.length;
  return out;
}

/**
 * Reference text featurizer: hashed token embeddings summarized at the
 * first token, later tokens folded in with decaying weight (a cheap
 * stand-in for a [CLS]-style sequence summary).
 */
class TextHashEncoder implements TextEncoder {
  id = 'texthash-v1';
  dim = 12;

  encode(text: string): Float64Array {
    const tokens = text.toLowerCase().match(/[a-z0-9']+/g);
    if (!tokens || tokens.length === 0) {
      throw new EncoderError(`caption has no tokens: ${JSON.stringify(text)}`);
    }
    const out = new Float64Array(this.dim);
    tokens.forEach((tok, k) => {
      const rand = mulberry32(hashString(`${this.id}:${tok}`));
      const weight = k === 0 ? 1.0 : 1.0 / ((k + 1) * (k + 1));
      for (let j = 0; j < this.dim; j++) {
        out[j] += weight * (rand() * 2 - 1);
      }
    });
    return out;
  }
}

const AUDIO_ENCODERS: Record<string, () => AudioEncoder> = {
  'framehash-v1': () => new FrameHashAudioEncoder(),
};

const TEXT_ENCODERS: Record<string, () => TextEncoder> = {
  'texthash-v1': () => new TextHashEncoder(),
};

export function resolveAudioEncoder(id: string): AudioEncoder {
  const make = AUDIO_ENCODERS[id];
  if (!make) {
    throw new EncoderError(
      `unknown audio encoder ${JSON.stringify(id)}; available: ${Object.keys(AUDIO_ENCODERS).join(', ')}`);
  }
  return make();
}

export function resolveTextEncoder(id: string): TextEncoder {
  const make = TEXT_ENCODERS[id];
  if (!make) {
    throw new EncoderError(
      `unknown text encoder ${JSON.stringify(id)}; available: ${Object.keys(TEXT_ENCODERS).join(', ')}`);
  }
  return make();
}
