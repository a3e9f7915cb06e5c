import {mkdirSync, writeFileSync} from 'node:fs';
import {join} from 'node:path';

export const MANIFEST_VERSION = 1;

export interface ManifestRecord {
  clip_id: string;
  speech_row: number;
  global_caption_rows: number[];
  fine_caption_rows: number[];
  tags?: Record<string, string>;
  transcript?: string;
}

export interface ManifestPayload {
  records: ManifestRecord[];
  /** row-major, one Float64Array per row; serialized as float32 LE */
  speech: Float64Array[];
  text: Float64Array[];
  captionTexts: Map<number, string>;
  metadata?: Record<string, unknown>;
}

function toF32Blob(rows: Float64Array[]): Buffer {
  const dim = rows[0]?.length ?? 0;
  const buf = Buffer.alloc(rows.length * dim * 4);
  rows.forEach((row, r) => {
    for (let j = 0; j < dim; j++) {
      buf.writeFloatLE(Math.fround(row[j]), (r * dim + j) * 4);
    }
  });
  return buf;
}

/**
 * Write a manifest directory in the format the primary package loads:
 * manifest.json + speech.f32 + text.f32 + captions.jsonl.
 */
export function writeManifest(dir: string, payload: ManifestPayload): void {
  const speechDim = payload.speech[0]?.length ?? 0;
  const textDim = payload.text[0]?.length ?? 0;
  for (const row of payload.speech) {
    if (row.length !== speechDim) {
      throw new Error(`inconsistent speech dims: ${row.length} vs ${speechDim}`);
    }
  }
  for (const row of payload.text) {
    if (row.length !== textDim) {
      throw new Error(`inconsistent text dims: ${row.length} vs ${textDim}`);
    }
  }
  const header: Record<string, unknown> = {
    version: MANIFEST_VERSION,
    speech_rows: payload.speech.length,
    speech_dim: speechDim,
    text_rows: payload.text.length,
    text_dim: textDim,
    records: payload.records,
  };
  if (payload.metadata) {
    header['metadata'] = payload.metadata;
  }
  mkdirSync(dir, {recursive: true});
  writeFileSync(join(dir, 'manifest.json'), JSON.stringify(header, null, 2));
  writeFileSync(join(dir, 'speech.f32'), toF32Blob(payload.speech));
  writeFileSync(join(dir, 'text.f32'), toF32Blob(payload.text));
  const lines = [...payload.captionTexts.keys()]
    .sort((a, b) => a - b)
    .map((idx) => JSON.stringify({index: idx, text: payload.captionTexts.get(idx)}));
  writeFileSync(join(dir, 'captions.jsonl'), lines.join('\n') + '\n');
}
