import type { ClassMap, DetectorModel } from "./model.js";
import { DEFAULT_CLASS_MAP } from "./model.js";
import type { OcrReading, WireDetection } from "./protocol.js";

/**
 * Deterministic heuristic model: no weights, no image decoding.
 *
 * Geometry is fixed for the canonical 2704x1520 camera frame: four 60x60
 * boxes around the frame center at score 0.75, and a constant "42" tag
 * reading placed clear of the frame edges. Class ids cycle through the
 * task's class list so every class appears.
 */

const STUB_BOXES: Array<[number, number, number, number]> = [
  [1272, 680, 60, 60],
  [1372, 680, 60, 60],
  [1272, 780, 60, 60],
  [1372, 780, 60, 60],
];

export const STUB_SCORE = 0.75;
export const STUB_TAG: OcrReading = {
  text: "42",
  confidence: 0.97,
  bbox: [1300, 80, 104, 60],
};

export class StubModel implements DetectorModel {
  constructor(private readonly classMap: ClassMap = DEFAULT_CLASS_MAP) {}

  detect(task: string | null): WireDetection[] {
    const classes = (task !== null && this.classMap[task]) || ["1", "2", "3", "4"];
    return STUB_BOXES.map((bbox, k) => ({
      bbox,
      class_id: (k % classes.length) + 1,
      score: STUB_SCORE,
    }));
  }

  ocr(): OcrReading {
    return STUB_TAG;
  }
}
