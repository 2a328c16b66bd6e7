use crate::types::Hash32;

/// Root committing to an ordered list of transaction hashes.
///
/// Empty list gives 32 zero bytes and a single leaf is its own root.
/// Otherwise adjacent nodes are paired (the last one duplicated on odd
/// levels) and hashed as `SHA-256(left ‖ right)` until one node remains.
pub fn merkle_root(leaves: &[Hash32]) -> Hash32 {
    match leaves {
        [] => Hash32::ZERO,
        [only] => *only,
        _ => {
            let mut level = leaves.to_vec();
            while level.len() > 1 {
                level = level
                    .chunks(2)
                    .map(|pair| {
                        let right = pair.get(1).unwrap_or(&pair[0]);
                        Hash32::digest_parts(&[pair[0].as_bytes(), right.as_bytes()])
                    })
                    .collect();
            }
            level[0]
        }
    }
}
