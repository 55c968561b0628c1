// Frozen pretrained CLIP text tower behind a small interface so tests can
// substitute a deterministic encoder.

export interface TextEncoder {
  encode(sentences: string[]): Promise<Float32Array[]>;
}

export class EncoderUnavailableError extends Error {}

const DEFAULT_MODEL = 'Xenova/clip-vit-base-patch32';

export async function loadClipEncoder(modelId?: string): Promise<TextEncoder> {
  const id = modelId ?? process.env.LER_CLIP_MODEL ?? DEFAULT_MODEL;
  let transformers: any;
  try {
    transformers = await import('@huggingface/transformers');
  } catch (e) {
    throw new EncoderUnavailableError(
      'could not import @huggingface/transformers: ' + (e as Error).message +
      '\ninstall it in frontend/ (with working onnxruntime binaries) and retry');
  }
  try {
    const tokenizer = await transformers.AutoTokenizer.from_pretrained(id);
    const model = await transformers.CLIPTextModelWithProjection.from_pretrained(id);
    return {
      async encode(sentences: string[]) {
        const input = tokenizer(sentences, { padding: true, truncation: true });
        const { text_embeds } = await model(input);
        const [k, dim] = text_embeds.dims;
        const data = text_embeds.data as Float32Array;
        const rows: Float32Array[] = [];
        for (let i = 0; i < k; i++) rows.push(data.slice(i * dim, (i + 1) * dim));
        return rows;
      },
    };
  } catch (e) {
    throw new EncoderUnavailableError(
      `could not load pretrained weights for ${id}: ${(e as Error).message}\n` +
      'download the model to the local cache first (set HF_HOME or LER_CLIP_MODEL ' +
      'to a local path with tokenizer + text tower).');
  }
}
