//! Browser bindings for three interactive views of the int8 engine. Each export
//! returns a JSON document; errors come back as `{"error": "..."}`.

pub mod ops;

use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(r: qnmt::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen]
pub fn quantize_values(text: &str) -> String {
    to_json(ops::quantize_values(text))
}

#[wasm_bindgen]
pub fn matmul_compare(m: usize, k: usize, p: usize, seed: u32) -> String {
    to_json(ops::matmul_compare(m, k, p, seed as u64))
}

#[wasm_bindgen]
pub fn translate(sentence: &str, seed: u32, beam: usize) -> String {
    to_json(ops::translate_both(sentence, seed as u64, beam))
}
