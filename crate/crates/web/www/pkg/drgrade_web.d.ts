/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    constructor(seed: number, grade: number, size: number);
    original_rgba(): Uint8Array;
    overlay_rgba(threshold: number): Uint8Array;
    preprocess_rgba(clip_limit: number, sigma: number, normalize: boolean): Uint8Array;
    /**
     * Staging result as JSON; a negative threshold selects Otsu.
     */
    stage_json(threshold: number, min_area: number): string;
    width(): number;
}

/**
 * Kappa, observed and chance agreement and band label, as JSON.
 */
export function kappa_json(both_yes: number, only_a: number, only_b: number, both_no: number): string;

export function trust_percent(quality: number, f1: number, confidence: number, w_quality: number, w_f1: number, w_conf: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_height: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_original_rgba: (a: number) => [number, number];
    readonly demo_overlay_rgba: (a: number, b: number) => [number, number, number, number];
    readonly demo_preprocess_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_stage_json: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_width: (a: number) => number;
    readonly kappa_json: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly trust_percent: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
