//! Token tensors and the `PACT` binary dump format.
//!
//! A dump is laid out as:
//!
//! ```text
//! offset  size  content
//! 0       4     ASCII magic "PACT"
//! 4       1     format version (1)
//! 5       4     header length L, little-endian u32
//! 9       L     UTF-8 JSON header {"name":..,"dtype":"f32","shape":[..]}
//! 9+L     4*N   payload, N = product(shape) little-endian f32 values, row-major
//! ```
//!
//! Files must end exactly at the payload end.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PactError, Result};

pub const MAGIC: &[u8; 4] = b"PACT";
pub const FORMAT_VERSION: u8 = 1;
const PREAMBLE_LEN: usize = 4 + 1 + 4;

/// A named, row-major f32 array whose first axis indexes tokens.
///
/// Hidden states are `(n, d)`; keys and queries are `(n, n_h, d_h)`. For
/// distance computations a token's row is the flattening of all trailing axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

impl TokenTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() {
            return Err(PactError::Shape("tensor rank must be at least 1".into()));
        }
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(PactError::Shape(format!(
                "shape {:?} implies {} elements but data has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let len = element_count(&shape)?;
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Number of tokens (size of the leading axis).
    pub fn n_tokens(&self) -> usize {
        self.shape[0]
    }

    /// Number of scalars per token.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.n_tokens()).map(move |i| self.row(i))
    }

    /// `(n_h, d_h)` for a rank-3 key/query tensor.
    pub fn heads(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[_, h, d] => Ok((h, d)),
            other => Err(PactError::Shape(format!(
                "{}: expected (n, n_h, d_h), got {:?}",
                self.name, other
            ))),
        }
    }

    pub fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(PactError::Shape(format!(
                "{}: expected rank {}, got shape {:?}",
                self.name, rank, self.shape
            )));
        }
        Ok(())
    }

    /// Gathers the given token rows into a new tensor, preserving trailing axes.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let w = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            if i >= self.n_tokens() {
                return Err(PactError::Shape(format!(
                    "row {} out of range for {} tokens",
                    i,
                    self.n_tokens()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self::new(self.name.clone(), shape, data)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(PactError::NonFinitePayload(i)),
            None => Ok(()),
        }
    }

    /// Serializes to the `PACT` byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            name: self.name.clone(),
            dtype: "f32".into(),
            shape: self.shape.clone(),
        })
        .expect("header serialization cannot fail");
        let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the `PACT` byte layout, validating every field.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(PactError::UnrecognizedFormat("missing PACT magic".into()));
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(PactError::CorruptHeader("truncated preamble".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(PactError::UnrecognizedFormat(format!(
                "unsupported format version {}",
                bytes[4]
            )));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload_start = PREAMBLE_LEN
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| PactError::CorruptHeader("header extends past end of file".into()))?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE_LEN..payload_start])
            .map_err(|e| PactError::CorruptHeader(format!("invalid header JSON: {e}")))?;
        if header.dtype != "f32" {
            return Err(PactError::CorruptHeader(format!(
                "unsupported dtype {:?}",
                header.dtype
            )));
        }
        if header.shape.is_empty() {
            return Err(PactError::CorruptHeader("empty shape".into()));
        }
        let count = element_count(&header.shape)
            .map_err(|_| PactError::CorruptHeader("shape overflows".into()))?;
        let payload = &bytes[payload_start..];
        if Some(payload.len()) != count.checked_mul(4) {
            return Err(PactError::CorruptHeader(format!(
                "shape {:?} needs {} payload bytes, found {}",
                header.shape,
                count.saturating_mul(4),
                payload.len()
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Self {
            name: header.name,
            shape: header.shape,
            data,
        };
        t.check_finite()?;
        Ok(t)
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| PactError::Shape(format!("shape {shape:?} overflows")))
}

pub fn write_tensor(t: &TokenTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| PactError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TokenTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PactError::io(path, e))?;
    TokenTensor::from_bytes(&bytes)
}

/// Per-token scalar position ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionIds(pub Vec<u32>);

impl PositionIds {
    /// `0, 1, …, n-1`.
    pub fn sequential(n: usize) -> Self {
        Self((0..n as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Stored on disk as a rank-1 f32 tensor; ids up to 2^24 are exact.
    pub fn to_tensor(&self, name: &str) -> TokenTensor {
        TokenTensor::new(
            name,
            vec![self.0.len()],
            self.0.iter().map(|&p| p as f32).collect(),
        )
        .expect("rank-1 shape always matches")
    }

    pub fn from_tensor(t: &TokenTensor) -> Result<Self> {
        t.expect_rank(1)?;
        t.data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= (1u32 << 24) as f32 {
                    Ok(v as u32)
                } else {
                    Err(PactError::Shape(format!(
                        "{}: position id {v} is not a non-negative integer",
                        t.name()
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_layout() {
        let t = TokenTensor::new("h", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = t.to_bytes();
        let header = br#"{"name":"h","dtype":"f32","shape":[2,2]}"#;
        assert_eq!(&bytes[..4], b"PACT");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize, header.len());
        assert_eq!(&bytes[9..9 + header.len()], header);
        assert_eq!(bytes.len(), 9 + header.len() + 16);
        assert_eq!(&bytes[bytes.len() - 4..], &4.0f32.to_le_bytes());
        assert_eq!(TokenTensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn empty_token_tensor_round_trips() {
        let t = TokenTensor::new("k", vec![0, 4], vec![]).unwrap();
        let back = TokenTensor::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.n_tokens(), 0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = TokenTensor::new("x", vec![3, 2], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, PactError::Shape(_)));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = TokenTensor::new("x", vec![1], vec![1.0]).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = TokenTensor::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().starts_with("unrecognized format"), "{err}");
    }

    #[test]
    fn truncated_payload() {
        let bytes = TokenTensor::new("x", vec![2, 2], vec![1.0; 4]).unwrap().to_bytes();
        let err = TokenTensor::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().starts_with("corrupt header"), "{err}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = TokenTensor::new("x", vec![1], vec![1.0]).unwrap().to_bytes();
        bytes.push(0);
        assert!(matches!(
            TokenTensor::from_bytes(&bytes),
            Err(PactError::CorruptHeader(_))
        ));
    }

    #[test]
    fn non_finite_rejected_on_load() {
        let t = TokenTensor::new("x", vec![3], vec![1.0, f32::NAN, 2.0]).unwrap();
        let err = TokenTensor::from_bytes(&t.to_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("non-finite payload"), "{err}");
        let t = TokenTensor::new("x", vec![1], vec![f32::INFINITY]).unwrap();
        assert!(matches!(
            TokenTensor::from_bytes(&t.to_bytes()),
            Err(PactError::NonFinitePayload(0))
        ));
    }

    #[test]
    fn unsupported_dtype_and_version() {
        let mut bytes = TokenTensor::new("x", vec![1], vec![1.0]).unwrap().to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            TokenTensor::from_bytes(&bytes),
            Err(PactError::UnrecognizedFormat(_))
        ));

        let header = br#"{"name":"x","dtype":"f16","shape":[1]}"#;
        let mut bytes = b"PACT\x01".to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            TokenTensor::from_bytes(&bytes),
            Err(PactError::CorruptHeader(_))
        ));
    }

    #[test]
    fn file_round_trip_and_io_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pact");
        let t = TokenTensor::new("q", vec![2, 1, 2], vec![0.5, -1.0, 3.25, 7.0]).unwrap();
        write_tensor(&t, &path).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), t);

        let missing = dir.path().join("missing.pact");
        let err = read_tensor(&missing).unwrap_err();
        assert!(err.to_string().contains("missing.pact"));
    }

    #[test]
    fn select_rows_keeps_trailing_axes() {
        let t = TokenTensor::new("k", vec![3, 1, 2], (0..6).map(|v| v as f32).collect()).unwrap();
        let s = t.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        assert_eq!(s.data(), &[4.0, 5.0, 0.0, 1.0]);
    }

    #[test]
    fn position_ids_through_tensor() {
        let p = PositionIds(vec![0, 7, 3]);
        assert_eq!(PositionIds::from_tensor(&p.to_tensor("pos")).unwrap(), p);
        let bad = TokenTensor::new("pos", vec![2], vec![1.5, 2.0]).unwrap();
        assert!(PositionIds::from_tensor(&bad).is_err());
        let neg = TokenTensor::new("pos", vec![1], vec![-1.0]).unwrap();
        assert!(PositionIds::from_tensor(&neg).is_err());
    }

    fn arb_tensor() -> impl Strategy<Value = TokenTensor> {
        (prop::collection::vec(0usize..5, 1..4), "[a-z_]{0,12}").prop_flat_map(|(shape, name)| {
            let len: usize = shape.iter().product();
            prop::collection::vec(
                any::<f32>().prop_filter("finite", |v| v.is_finite()),
                len,
            )
            .prop_map(move |data| TokenTensor::new(name.clone(), shape.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in arb_tensor()) {
            let back = TokenTensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.name(), t.name());
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
