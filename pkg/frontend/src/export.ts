// Encode prompts.txt with the frozen CLIP text tower, project the features
// down to the recognizer's query width, and write prompts.lten (rank-2
// LTEN, one row per prompt, projection seed in the version field).
// Aggregation over the pool happens on the recognizer side, so the file
// stays usable for per-prompt ablations.

import { readFileSync, writeFileSync } from 'fs';
import { encodeLten } from './lten.js';
import { makeProjection, project } from './projection.js';
import { loadClipEncoder, EncoderUnavailableError, TextEncoder } from './clip.js';

export interface ExportJob {
  promptsPath: string;
  outPath: string;
  dim: number;       // recognizer D0
  seed: number;      // projection seed, recorded in the LTEN version field
  model?: string;
  encoder?: TextEncoder; // injected in tests
}

export function readPrompts(path: string): string[] {
  const lines = readFileSync(path, 'utf-8')
    .split('\n')
    .map(s => s.trim())
    .filter(s => s.length > 0);
  if (lines.length === 0) throw new Error(`${path}: no prompts found`);
  return lines;
}

export async function runExport(job: ExportJob): Promise<{ k: number; dim: number }> {
  const prompts = readPrompts(job.promptsPath);
  const encoder = job.encoder ?? (await loadClipEncoder(job.model));
  const features = await encoder.encode(prompts);
  const inDim = features[0].length;
  if (job.dim > inDim) {
    throw new Error(`target dim ${job.dim} exceeds encoder width ${inDim}`);
  }
  const rows = makeProjection(job.seed, inDim, job.dim);
  const projected = features.map(f => project(rows, f));
  writeFileSync(job.outPath, encodeLten(projected, job.seed));
  return { k: prompts.length, dim: job.dim };
}

function parseArgs(argv: string[]): ExportJob {
  const job: any = { dim: 128, seed: 0 };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--prompts') job.promptsPath = argv[++i];
    else if (a === '--out') job.outPath = argv[++i];
    else if (a === '--dim') job.dim = parseInt(argv[++i], 10);
    else if (a === '--seed') job.seed = parseInt(argv[++i], 10);
    else if (a === '--model') job.model = argv[++i];
    else {
      console.error(`unknown argument ${a}`);
      console.error('usage: export --prompts prompts.txt --out prompts.lten '
        + '[--dim 128] [--seed 0] [--model id-or-path]');
      process.exit(2);
    }
  }
  if (!job.promptsPath || !job.outPath) {
    console.error('usage: export --prompts prompts.txt --out prompts.lten '
      + '[--dim 128] [--seed 0] [--model id-or-path]');
    process.exit(2);
  }
  return job as ExportJob;
}

const isMain = process.argv[1] && import.meta.url.endsWith(
  process.argv[1].split('/').pop() as string);

if (isMain) {
  runExport(parseArgs(process.argv.slice(2)))
    .then(({ k, dim }) => {
      console.log(`wrote ${k} x ${dim} prompt features`);
    })
    .catch(e => {
      if (e instanceof EncoderUnavailableError) {
        console.error(`encoder unavailable: ${e.message}`);
      } else {
        console.error(`export failed: ${e.message}`);
      }
      process.exit(1);
    });
}
