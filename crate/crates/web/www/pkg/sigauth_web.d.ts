/* tslint:disable */
/* eslint-disable */

/**
 * Default tier thresholds, low to vhigh.
 */
export function default_policy(): Float64Array;

/**
 * Generate a small population, train it on one thread and score held-out
 * probes. Returns the FAR/FRR sweep, the EER and every probe score.
 */
export function evaluate_population(seed: number, users: number, noise: number, hidden: number, locals: number): string;

/**
 * One synthetic sample of user `user` (zero-based) with its quality report.
 */
export function synth_signature(seed: number, user: number, kind: string, noise: number, sample: number): string;

/**
 * Decision at each priority tier for one score under the given policy.
 */
export function tier_decisions(score: number, low: number, avg: number, high: number, vhigh: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly default_policy: () => [number, number];
    readonly evaluate_population: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly synth_signature: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly tier_decisions: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
