/* tslint:disable */
/* eslint-disable */
export class WebDemo {
  free(): void;
  imageRgba(scale: number): Uint8Array;
  levelRgba(level: number, scale: number): Uint8Array;
  /**
   * Prediction as JSON.
   */
  loadSample(shape: string, seed: number, noise: number): string;
  heatmapRgba(scale: number): Uint8Array;
  overlayRgba(top: number, scale: number): Uint8Array;
  constructor(seed: number);
  morf(steps: number, trials: number, lime_samples: number): string;
  width(): number;
  height(): number;
  levels(): number;
  explain(hier: boolean, alpha: number, beta: number): string;
  segment(levels: number, min_region: number): string;
  accuracy(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
  readonly memory: WebAssembly.Memory;
  readonly __wbg_webdemo_free: (a: number, b: number) => void;
  readonly webdemo_accuracy: (a: number) => number;
  readonly webdemo_explain: (a: number, b: number, c: number, d: number) => [number, number, number, number];
  readonly webdemo_heatmapRgba: (a: number, b: number) => [number, number, number, number];
  readonly webdemo_height: (a: number) => number;
  readonly webdemo_imageRgba: (a: number, b: number) => [number, number, number, number];
  readonly webdemo_levelRgba: (a: number, b: number, c: number) => [number, number, number, number];
  readonly webdemo_levels: (a: number) => number;
  readonly webdemo_loadSample: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
  readonly webdemo_morf: (a: number, b: number, c: number, d: number) => [number, number, number, number];
  readonly webdemo_new: (a: number) => [number, number, number];
  readonly webdemo_overlayRgba: (a: number, b: number, c: number) => [number, number, number, number];
  readonly webdemo_segment: (a: number, b: number, c: number) => [number, number, number, number];
  readonly webdemo_width: (a: number) => number;
  readonly __wbindgen_export_0: WebAssembly.Table;
  readonly __externref_table_dealloc: (a: number) => void;
  readonly __wbindgen_free: (a: number, b: number, c: number) => void;
  readonly __wbindgen_malloc: (a: number, b: number) => number;
  readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
  readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;
/**
* Instantiates the given `module`, which can either be bytes or
* a precompiled `WebAssembly.Module`.
*
* @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
*
* @returns {InitOutput}
*/
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
* If `module_or_path` is {RequestInfo} or {URL}, makes a request and
* for everything else, calls `WebAssembly.instantiate` directly.
*
* @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
*
* @returns {Promise<InitOutput>}
*/
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
