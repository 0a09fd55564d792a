/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_webdemo_free: (a: number, b: number) => void;
export const webdemo_accuracy: (a: number) => number;
export const webdemo_explain: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const webdemo_heatmapRgba: (a: number, b: number) => [number, number, number, number];
export const webdemo_height: (a: number) => number;
export const webdemo_imageRgba: (a: number, b: number) => [number, number, number, number];
export const webdemo_levelRgba: (a: number, b: number, c: number) => [number, number, number, number];
export const webdemo_levels: (a: number) => number;
export const webdemo_loadSample: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const webdemo_morf: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const webdemo_new: (a: number) => [number, number, number];
export const webdemo_overlayRgba: (a: number, b: number, c: number) => [number, number, number, number];
export const webdemo_segment: (a: number, b: number, c: number) => [number, number, number, number];
export const webdemo_width: (a: number) => number;
export const __wbindgen_export_0: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
