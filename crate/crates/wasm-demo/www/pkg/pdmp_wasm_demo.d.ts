/* tslint:disable */
/* eslint-disable */

/**
 * Certificate for `(m, M, alpha)` as JSON text. The log-concave family also
 * carries the hypocoercive margins.
 */
export function certify(m: number, big_m: number, alpha: number, gaussian: boolean): string;

/**
 * Mean squared coupling distance of `pairs` RHMC pairs on the standard
 * Gaussian in two dimensions, under the Gaussian tuning at `alpha`.
 * Layout: `[mu, lambda_ref]`, then `(t, mean d2)` pairs every 0.1.
 */
export function coupling_decay(alpha: number, pairs: number, horizon: number, seed: bigint): Float64Array;

/**
 * Two trajectories from the same start on the standard Gaussian in `d`
 * dimensions, sampled at `points` equally spaced times in `[0, horizon]`.
 * Layout: `[bounces, refreshes_bps, refreshes_rhmc]`, then `points`
 * `(x1, x2)` pairs for BPS followed by `points` pairs for RHMC.
 */
export function sample_paths(d: number, lambda_ref: number, horizon: number, seed: bigint, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly certify: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly coupling_decay: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly sample_paths: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number, number];
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
