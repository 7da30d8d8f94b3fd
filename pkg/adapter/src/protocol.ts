/**
 * Newline-delimited JSON detector protocol: one UTF-8 object per line.
 *
 * Responses are written in canonical form (recursively sorted keys, compact
 * separators) so a fixed request transcript always yields byte-identical
 * output.
 */

export interface WireRequest {
  id: number;
  op: "detect" | "ocr";
  task: string | null;
  imagePath: string;
}

export interface WireDetection {
  bbox: [number, number, number, number];
  class_id: number;
  score: number;
}

export interface OcrReading {
  text: string;
  confidence: number;
  bbox: [number, number, number, number];
}

/** JSON.stringify with object keys emitted in sorted order at every level. */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .filter(([, v]) => v !== undefined)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
  return "{" + entries.join(",") + "}";
}

export class BadRequest extends Error {
  constructor(message: string, readonly id: number | null = null) {
    super(message);
  }
}

export function parseRequest(line: string): WireRequest {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new BadRequest("invalid JSON");
  }
  if (raw === null || typeof raw !== "object" || Array.isArray(raw)) {
    throw new BadRequest("request must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const id = typeof obj.id === "number" && Number.isInteger(obj.id)
    ? (obj.id as number)
    : null;
  if (id === null) {
    throw new BadRequest("id must be an integer");
  }
  if (obj.op !== "detect" && obj.op !== "ocr") {
    throw new BadRequest("unsupported op", id);
  }
  const image = obj.image as Record<string, unknown> | undefined;
  if (!image || typeof image !== "object" || typeof image.path !== "string") {
    throw new BadRequest("image.path must be a string", id);
  }
  const task = typeof obj.task === "string" ? obj.task : null;
  return { id, op: obj.op, task, imagePath: image.path };
}

export function detectResponse(id: number, detections: WireDetection[]): string {
  return canonicalJson({ id, detections });
}

export function ocrResponse(id: number, reading: OcrReading | null): string {
  if (reading === null) {
    return canonicalJson({ id, text: null });
  }
  return canonicalJson({
    id,
    text: reading.text,
    confidence: reading.confidence,
    bbox: reading.bbox,
  });
}

export function errorResponse(
  id: number | null,
  code: string,
  message: string,
): string {
  return canonicalJson({ id, error: { code, message } });
}
