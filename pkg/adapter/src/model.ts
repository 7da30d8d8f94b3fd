import type { OcrReading, WireDetection } from "./protocol.js";

/** What the serve loop needs from any model, stub or weights-backed. */
export interface DetectorModel {
  detect(
    task: string | null,
    imagePath: string,
  ): WireDetection[] | Promise<WireDetection[]>;
  ocr(imagePath: string): OcrReading | null | Promise<OcrReading | null>;
}

export type ClassMap = Record<string, string[]>;

export const DEFAULT_CLASS_MAP: ClassMap = {
  teat_shape: ["1", "3", "7", "8"],
  skin_condition: ["C1", "C3"],
};
