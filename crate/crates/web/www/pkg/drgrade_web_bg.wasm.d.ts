/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_height: (a: number) => number;
export const demo_new: (a: number, b: number, c: number) => [number, number, number];
export const demo_original_rgba: (a: number) => [number, number];
export const demo_overlay_rgba: (a: number, b: number) => [number, number, number, number];
export const demo_preprocess_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_stage_json: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_width: (a: number) => number;
export const kappa_json: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const trust_percent: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
