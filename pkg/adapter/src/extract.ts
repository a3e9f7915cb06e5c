import {readFileSync} from 'node:fs';
import {z} from 'zod';

import {meanPool, resolveAudioEncoder, resolveTextEncoder} from './encoders.js';
import {ManifestRecord, writeManifest} from './manifest.js';
import {readWav} from './wav.js';

const ClipSchema = z.object({
  clip_id: z.string().min(1),
  audio: z.string().min(1),
  global_captions: z.array(z.string().min(1)).default([]),
  fine_captions: z.array(z.string().min(1)).default([]),
  tags: z.record(z.string()).optional(),
  transcript: z.string().optional(),
});

export const JobSchema = z.object({
  audio_encoder: z.string().min(1),
  text_encoder: z.string().min(1),
  output: z.string().min(1),
  clips: z.array(ClipSchema).min(1),
});

export type ExtractJob = z.infer<typeof JobSchema>;

export class JobError extends Error {}

export function loadJob(path: string): ExtractJob {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (e) {
    throw new JobError(`cannot read job file ${path}: ${(e as Error).message}`);
  }
  const parsed = JobSchema.safeParse(raw);
  if (!parsed.success) {
    throw new JobError(`invalid job file ${path}: ${parsed.error.issues
      .map((i) => `${i.path.join('.')}: ${i.message}`).join('; ')}`);
  }
  for (const clip of parsed.data.clips) {
    if (clip.global_captions.length + clip.fine_captions.length === 0) {
      throw new JobError(`clip ${clip.clip_id}: needs at least one caption`);
    }
  }
  const ids = new Set<string>();
  for (const clip of parsed.data.clips) {
    if (ids.has(clip.clip_id)) {
      throw new JobError(`duplicate clip_id ${clip.clip_id}`);
    }
    ids.add(clip.clip_id);
  }
  return parsed.data;
}

export interface ExtractResult {
  speechRows: number;
  textRows: number;
  outputDir: string;
}

/**
 * Run both encoders over the corpus and write a manifest directory.
 *
 * All features are computed before anything is written, so a failing
 * clip leaves no partial output. Rows appear in job order.
 */
export function extractEmbeddings(job: ExtractJob): ExtractResult {
  const audioEnc = resolveAudioEncoder(job.audio_encoder);
  const textEnc = resolveTextEncoder(job.text_encoder);

  const speech: Float64Array[] = [];
  const text: Float64Array[] = [];
  const records: ManifestRecord[] = [];
  const captionTexts = new Map<number, string>();
  const provenance: Array<Record<string, unknown>> = [];

  for (const clip of job.clips) {
    let audio;
    try {
      audio = readWav(clip.audio);
      speech.push(meanPool(audioEnc.frames(audio)));
    } catch (e) {
      throw new JobError(`clip ${clip.clip_id}: ${(e as Error).message}`);
    }
    const addCaptions = (captions: string[]): number[] =>
      captions.map((caption) => {
        const row = text.length;
        try {
          text.push(textEnc.encode(caption));
        } catch (e) {
          throw new JobError(`clip ${clip.clip_id}: ${(e as Error).message}`);
        }
        captionTexts.set(row, caption);
        return row;
      });
    const record: ManifestRecord = {
      clip_id: clip.clip_id,
      speech_row: speech.length - 1,
      global_caption_rows: addCaptions(clip.global_captions),
      fine_caption_rows: addCaptions(clip.fine_captions),
    };
    if (clip.tags) record.tags = clip.tags;
    if (clip.transcript !== undefined) record.transcript = clip.transcript;
    records.push(record);
    provenance.push({
      clip_id: clip.clip_id,
      source: clip.audio,
      time_range_s: [0, audio.samples.length / audio.sampleRate],
      n_frames: Math.floor(
        (audio.samples.length - audioEnc.frameLength) / audioEnc.hopLength) + 1,
    });
  }

  writeManifest(job.output, {
    records,
    speech,
    text,
    captionTexts,
    metadata: {
      tool: 'embed-adapter 0.1.0',
      audio_encoder: audioEnc.id,
      text_encoder: textEnc.id,
      audio_pooling: 'mean-over-frames',
      text_pooling: 'first-token-summary',
      frame_length: audioEnc.frameLength,
      hop_length: audioEnc.hopLength,
      inference_precision: 'float64, stored as float32',
      provenance,
    },
  });
  return {speechRows: speech.length, textRows: text.length, outputDir: job.output};
}
