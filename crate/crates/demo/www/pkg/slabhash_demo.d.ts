/* tslint:disable */
/* eslint-disable */

export class DemoTable {
    free(): void;
    [Symbol.dispose](): void;
    apply(script: string): string;
    block_bitmap(block: number): Uint32Array;
    block_popcounts(): Uint32Array;
    dump(): string;
    flush(): string;
    constructor(buckets: number, key_only: boolean, seed: number);
    random_ops(count: number, universe: number, seed: number): string;
    stats(): string;
}

export function utilization_curve(n: number, points: number, key_only: boolean, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demotable_free: (a: number, b: number) => void;
    readonly demotable_apply: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demotable_block_bitmap: (a: number, b: number) => [number, number];
    readonly demotable_block_popcounts: (a: number) => [number, number];
    readonly demotable_dump: (a: number) => [number, number];
    readonly demotable_flush: (a: number) => [number, number, number, number];
    readonly demotable_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demotable_random_ops: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demotable_stats: (a: number) => [number, number, number, number];
    readonly utilization_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
