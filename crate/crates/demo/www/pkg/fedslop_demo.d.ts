/* tslint:disable */
/* eslint-disable */

/**
 * Squared global gradient norm per round on a quadratic federation, for
 * projected momentum at rank `r` followed by the unprojected baseline:
 * `rounds` values each.
 */
export function convergence(dim: number, r: number, clients: number, rounds: number, seed: bigint): Float64Array;

/**
 * Splits `samples` balanced labels over ten classes among `clients` with a
 * Dirichlet(`alpha`) prior. Returns `[mean TV, counts…]` with the counts
 * laid out client-major, ten per client.
 */
export function label_split(clients: number, alpha: number, samples: number, seed: bigint): Float64Array;

/**
 * Draws `samples` bases from St(d, r) and projects a fixed unit vector.
 *
 * Returns `[mean ratio, r/d, bins…]`: the mean of `‖Πg‖²/‖g‖²` and a
 * 20-bin histogram of it over `[0, 1]`.
 */
export function projector_energy(d: number, r: number, samples: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly convergence: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly label_split: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly projector_energy: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
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
