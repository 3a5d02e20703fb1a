/* tslint:disable */
/* eslint-disable */

/**
 * Girsanov entropy estimate against `½∫(b/σ)² dt`.
 */
export function entropy(b: number, sigma: number, horizon: number, n_paths: number, dt: number, seed: number): string;

/**
 * Merton log-utility value and control profile at t = 0.
 */
export function solve_merton(b: number, sigma: number, horizon: number, x0: number, nx: number, nt: number): string;

/**
 * Risk-minimization value and control profile at t = 0.
 */
export function solve_riskmin(b: number, sigma: number, horizon: number, x0: number, nx: number, nt: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly entropy: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly solve_merton: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly solve_riskmin: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
