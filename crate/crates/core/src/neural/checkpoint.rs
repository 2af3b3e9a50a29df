//! Raw parameter encoding: each tensor is a little-endian IEEE-754 `f64`
//! array in row-major order, described by a [`ParamLayout`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::params::{ParamLayout, ParamStore};

pub fn encode_le(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * 8);
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_le(bytes: &[u8], rows: usize, cols: usize) -> Result<Tensor> {
    if bytes.len() != rows * cols * 8 {
        return Err(Error::shape(alloc::format!(
            "blob of {} bytes does not hold a {rows}x{cols} tensor",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// Layout plus one blob per parameter, in store order.
pub fn export(store: &ParamStore) -> (Vec<ParamLayout>, Vec<Vec<u8>>) {
    let blobs = store.iter().map(|(_, p)| encode_le(&p.value)).collect();
    (store.layout(), blobs)
}

/// Loads blobs produced by [`export`] into a store of identical architecture.
pub fn import(store: &mut ParamStore, layout: &[ParamLayout], blobs: &[Vec<u8>]) -> Result<()> {
    if layout.len() != blobs.len() {
        return Err(Error::shape("layout and blob counts differ"));
    }
    let values: Vec<(String, Tensor)> = layout
        .iter()
        .zip(blobs)
        .map(|(l, b)| decode_le(b, l.rows, l.cols).map(|t| (l.name.clone(), t)))
        .collect::<Result<_>>()?;
    store.load_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = seeded(3);
        let mut a = ParamStore::new();
        a.add_xavier("w", 3, 4, &mut rng);
        a.add_normal("t", 2, 5, 0.02, &mut rng);
        a.add("c", Tensor::from_vec(1, 3, vec![f64::MIN_POSITIVE, -0.0, 1e300]).unwrap());
        let (layout, blobs) = export(&a);

        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(3, 4));
        b.add("t", Tensor::zeros(2, 5));
        b.add("c", Tensor::zeros(1, 3));
        import(&mut b, &layout, &blobs).unwrap();
        for ((_, p), (_, q)) in a.iter().zip(b.iter()) {
            let pb: Vec<u64> = p.value.as_slice().iter().map(|v| v.to_bits()).collect();
            let qb: Vec<u64> = q.value.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(pb, qb);
        }
    }

    #[test]
    fn wrong_blob_length_is_rejected() {
        assert!(decode_le(&[0u8; 12], 1, 2).is_err());
    }

    use alloc::vec;
}
