/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const counterexample: (a: number, b: number, c: number, d: number) => [number, number];
export const paths: (a: number, b: number, c: number) => [number, number];
export const recover: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
