//! Merkle tree over transaction bytes. Leaves are hashed with `h2`, interior
//! nodes are `h2(left ‖ right)`, and a level with an odd node count
//! duplicates its last node.

use crate::crypto::{h2, h2_concat, Digest32};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("empty block: no leaves")]
    EmptyBlock,
    #[error("leaf index {index} out of range for {leaves} leaves")]
    BadLeafIndex { index: usize, leaves: usize },
}

/// Which side a sibling hash sits on when recombining upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiblingSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u32,
    pub siblings: Vec<(Digest32, SiblingSide)>,
}

fn levels(leaves: &[Vec<u8>]) -> Vec<Vec<Digest32>> {
    let mut all = vec![leaves.iter().map(|l| h2(l)).collect::<Vec<_>>()];
    while all.last().unwrap().len() > 1 {
        let prev = all.last().unwrap();
        let mut next = Vec::with_capacity(prev.len().div_ceil(2));
        for pair in prev.chunks(2) {
            let right = pair.get(1).unwrap_or(&pair[0]);
            next.push(h2_concat(&[&pair[0], right]));
        }
        all.push(next);
    }
    all
}

pub fn merkle_root(leaves: &[Vec<u8>]) -> Result<Digest32, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::EmptyBlock);
    }
    Ok(levels(leaves).last().unwrap()[0])
}

pub fn merkle_proof(leaves: &[Vec<u8>], index: usize) -> Result<MerkleProof, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::EmptyBlock);
    }
    if index >= leaves.len() {
        return Err(MerkleError::BadLeafIndex {
            index,
            leaves: leaves.len(),
        });
    }
    let all = levels(leaves);
    let mut siblings = Vec::new();
    let mut pos = index;
    for level in &all[..all.len() - 1] {
        let (sib, side) = if pos.is_multiple_of(2) {
            // Right sibling; duplicate self at the end of an odd level.
            (*level.get(pos + 1).unwrap_or(&level[pos]), SiblingSide::Right)
        } else {
            (level[pos - 1], SiblingSide::Left)
        };
        siblings.push((sib, side));
        pos /= 2;
    }
    Ok(MerkleProof {
        leaf_index: index as u32,
        siblings,
    })
}

pub fn verify_proof(leaf: &[u8], proof: &MerkleProof, root: &Digest32) -> bool {
    let mut acc = h2(leaf);
    for (sib, side) in &proof.siblings {
        acc = match side {
            SiblingSide::Right => h2_concat(&[&acc, sib]),
            SiblingSide::Left => h2_concat(&[sib, &acc]),
        };
    }
    acc == *root
}
