//! Content-Encoding handling for origin bodies.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentEncoding {
    #[default]
    Identity,
    Gzip,
    Brotli,
}

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("unsupported content encoding {0:?}")]
    UnsupportedEncoding(String),
    #[error("invalid {encoding} body: {source}")]
    Decode {
        encoding: ContentEncoding,
        #[source]
        source: std::io::Error,
    },
}

impl ContentEncoding {
    pub fn token(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Gzip => "gzip",
            Self::Brotli => "br",
        }
    }

    /// Interprets a `Content-Encoding` header value. An absent or empty
    /// header is identity; stacked encodings are not supported.
    pub fn from_header(value: Option<&str>) -> Result<Self, CodecError> {
        match value.map(str::trim) {
            None | Some("") => Ok(Self::Identity),
            Some(v) => v.parse(),
        }
    }
}

impl FromStr for ContentEncoding {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, CodecError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(Self::Identity),
            "gzip" | "x-gzip" => Ok(Self::Gzip),
            "br" => Ok(Self::Brotli),
            _ => Err(CodecError::UnsupportedEncoding(s.to_string())),
        }
    }
}

impl fmt::Display for ContentEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Encodes `decoded` as `target`.
pub fn transcode(decoded: &[u8], target: ContentEncoding) -> Vec<u8> {
    match target {
        ContentEncoding::Identity => decoded.to_vec(),
        ContentEncoding::Gzip => {
            let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(decoded).expect("writing to a Vec cannot fail");
            enc.finish().expect("writing to a Vec cannot fail")
        }
        ContentEncoding::Brotli => {
            let mut out = Vec::new();
            {
                let mut enc = brotli::CompressorWriter::new(&mut out, 4096, 9, 22);
                enc.write_all(decoded).expect("writing to a Vec cannot fail");
            }
            out
        }
    }
}

/// Encodes `decoded` with the encoding named by `token`.
pub fn transcode_token(decoded: &[u8], token: &str) -> Result<Vec<u8>, CodecError> {
    Ok(transcode(decoded, token.parse()?))
}

pub fn decode(encoded: &[u8], encoding: ContentEncoding) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    let res = match encoding {
        ContentEncoding::Identity => return Ok(encoded.to_vec()),
        ContentEncoding::Gzip => flate2::read::MultiGzDecoder::new(encoded).read_to_end(&mut out),
        ContentEncoding::Brotli => brotli::Decompressor::new(encoded, 4096).read_to_end(&mut out),
    };
    res.map_err(|source| CodecError::Decode { encoding, source })?;
    Ok(out)
}

/// Gzip size of `body`, used for the compressed-byte report columns.
pub fn gzip_len(body: &[u8]) -> usize {
    transcode(body, ContentEncoding::Gzip).len()
}
