/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_dissection_free: (a: number, b: number) => void;
export const dissection_layerCount: (a: number) => number;
export const dissection_neuronSvg: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const dissection_new: (a: number, b: number) => [number, number, number];
export const dissection_summary: (a: number) => [number, number, number, number];
export const dissection_wordcloudSvg: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
