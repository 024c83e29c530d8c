/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demotable_free: (a: number, b: number) => void;
export const demotable_apply: (a: number, b: number, c: number) => [number, number, number, number];
export const demotable_block_bitmap: (a: number, b: number) => [number, number];
export const demotable_block_popcounts: (a: number) => [number, number];
export const demotable_dump: (a: number) => [number, number];
export const demotable_flush: (a: number) => [number, number, number, number];
export const demotable_new: (a: number, b: number, c: number) => [number, number, number];
export const demotable_random_ops: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demotable_stats: (a: number) => [number, number, number, number];
export const utilization_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
