/* tslint:disable */
/* eslint-disable */

/**
 * Continuation path for the two-player scalar game: one entry per stage,
 * plus the exact equilibrium for comparison.
 */
export function continuation_path(c1: number, c2: number, b: number, tau0: number, rho: number, k_max: number): string;

/**
 * Sweeps player 1's share `u_1` over `[lo, hi]` (player 2 gets `b − u_1`)
 * and reports the inner equilibrium and the master map at each point. The
 * master equilibrium sits where `g_1 = g_2`.
 */
export function share_sweep(c1: number, c2: number, b: number, tau: number, lo: number, hi: number, samples: number): string;

/**
 * Solves a full problem document, returning the run summary, the CSV trace
 * and the feasibility trace.
 */
export function solve_document(text: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly continuation_path: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly share_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly solve_document: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
