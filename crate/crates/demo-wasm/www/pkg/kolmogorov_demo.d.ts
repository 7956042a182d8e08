/* tslint:disable */
/* eslint-disable */

/**
 * Synchronously coupled endpoints projected on coordinates `(i, j)`.
 *
 * Returns `[px0, py0, sx0, sy0, px1, …]`: primary then shadow for each draw.
 */
export function coupled_scatter(model_json: string, x: Float64Array, alpha: Float64Array, v: Float64Array, eps: number, t: number, n: number, seed: number, i: number, j: number): Float64Array;

/**
 * `C(t)`, `C_+(t)` and the smallest eigenvalue of `C(t)` for a model given as JSON.
 */
export function covariance(model_json: string, t: number): string;

/**
 * Margins of a Poincaré or Bakry-Émery check along a list of times.
 *
 * `check` is `"poincare"` or `"be"`, `variant` is `"right"` or `"reverse"`.
 */
export function margins(model_json: string, testfn_json: string, check: string, variant: string, x: Float64Array, times: Float64Array, n: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly coupled_scatter: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number, number, number];
    readonly covariance: (a: number, b: number, c: number) => [number, number, number, number];
    readonly margins: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
