/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_maps_free: (a: number, b: number) => void;
export const hpssScene: (a: number, b: number, c: number) => [number, number, number];
export const lossCurve: (a: number, b: number, c: number) => [number, number, number, number];
export const maps_bins: (a: number) => number;
export const maps_caption: (a: number) => [number, number];
export const maps_count: (a: number) => number;
export const maps_frames: (a: number) => number;
export const maps_map: (a: number, b: number) => [number, number];
export const sdbdScene: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
