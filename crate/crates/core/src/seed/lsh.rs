//! Random-hyperplane (sign) hashing for cosine similarity.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::embed::dot;
use super::ApproxParams;
use crate::exec::Exec;

#[derive(Debug, Clone)]
pub(crate) struct HyperplaneTables {
    dim: usize,
    hashes_per_table: usize,
    probe_radius: u32,
    /// `tables × hashes_per_table` planes, each `dim` long, flattened.
    planes: Vec<f32>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

impl HyperplaneTables {
    pub(crate) fn build(vectors: &[f32], dim: usize, params: &ApproxParams, exec: Exec) -> Self {
        let tables = params.num_hyperplane_tables;
        let bits = params.hashes_per_table;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let planes: Vec<f32> = (0..tables * bits * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut index = Self {
            dim,
            hashes_per_table: bits,
            probe_radius: params.probe_radius,
            planes,
            buckets: vec![HashMap::new(); tables],
        };
        let n = vectors.len() / dim;
        let keys: Vec<Vec<u64>> = exec.map_range(n, |i| index.keys(&vectors[i * dim..(i + 1) * dim]));
        for (id, row) in keys.into_iter().enumerate() {
            for (table, key) in row.into_iter().enumerate() {
                index.buckets[table].entry(key).or_default().push(id as u32);
            }
        }
        index
    }

    fn keys(&self, vector: &[f32]) -> Vec<u64> {
        (0..self.buckets.len())
            .map(|table| {
                let mut key = 0u64;
                for bit in 0..self.hashes_per_table {
                    let offset = (table * self.hashes_per_table + bit) * self.dim;
                    let plane = &self.planes[offset..offset + self.dim];
                    if dot(plane, vector) >= 0.0 {
                        key |= 1 << bit;
                    }
                }
                key
            })
            .collect()
    }

    /// Keys at exactly Hamming distance `radius` from `key`.
    fn ring(&self, key: u64, radius: u32) -> Vec<u64> {
        fn walk(bits: usize, start: usize, left: u32, key: u64, out: &mut Vec<u64>) {
            if left == 0 {
                out.push(key);
                return;
            }
            for i in start..bits {
                walk(bits, i + 1, left - 1, key ^ (1 << i), out);
            }
        }
        let mut out = Vec::new();
        walk(self.hashes_per_table, 0, radius, key, &mut out);
        out
    }

    /// Ids sharing a probed bucket with `query` in any table, ascending.
    /// Probing covers every key within `probe_radius` of the query key and
    /// widens one ring at a time while fewer than `min_count` ids were found.
    pub(crate) fn candidates(&self, query: &[f32], n: usize, min_count: usize) -> Vec<u32> {
        let keys = self.keys(query);
        let mut seen = vec![false; n];
        let mut found = 0;
        let mut radius = 0;
        loop {
            for (table, key) in keys.iter().enumerate() {
                for probe in self.ring(*key, radius) {
                    if let Some(ids) = self.buckets[table].get(&probe) {
                        for &id in ids {
                            if !seen[id as usize] {
                                seen[id as usize] = true;
                                found += 1;
                            }
                        }
                    }
                }
            }
            radius += 1;
            let exhausted = radius as usize > self.hashes_per_table;
            if exhausted || (radius > self.probe_radius && found >= min_count.min(n)) {
                break;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, hit)| **hit)
            .map(|(id, _)| id as u32)
            .collect()
    }
}
