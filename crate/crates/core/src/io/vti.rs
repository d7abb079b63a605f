//! VTK XML ImageData reader/writer.
//!
//! Supports a single piece with one point-data scalar array in `ascii`,
//! inline `binary` (base64) or appended (`raw` / `base64`) encodings.
//! Compressed files are rejected as unsupported.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::LoadError;
use crate::volume::VolumeDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    Base64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Int8" | "Char" => Self::I8,
            "UInt8" | "UnsignedChar" => Self::U8,
            "Int16" | "Short" => Self::I16,
            "UInt16" | "UnsignedShort" => Self::U16,
            "Int32" | "Int" => Self::I32,
            "UInt32" | "UnsignedInt" => Self::U32,
            "Int64" | "Long" | "LongLong" => Self::I64,
            "UInt64" | "UnsignedLong" | "UnsignedLongLong" => Self::U64,
            "Float32" | "Float" => Self::F32,
            "Float64" | "Double" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::I64 | Self::U64 | Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:literal) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                if big_endian {
                    <$t>::from_be_bytes(a) as f64
                } else {
                    <$t>::from_le_bytes(a) as f64
                }
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => rd!(i16, 2),
            Self::U16 => rd!(u16, 2),
            Self::I32 => rd!(i32, 4),
            Self::U32 => rd!(u32, 4),
            Self::I64 => rd!(i64, 8),
            Self::U64 => rd!(u64, 8),
            Self::F32 => rd!(f32, 4),
            Self::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug, Default)]
struct ArrayDecl {
    name: Option<String>,
    scalar_type: Option<String>,
    format: Option<String>,
    components: usize,
    offset: Option<usize>,
    text: String,
}

#[derive(Debug, Default)]
struct Header {
    big_endian: bool,
    header_u64: bool,
    whole_extent: Option<[i64; 6]>,
    origin: [f64; 3],
    spacing: [f64; 3],
    piece_extent: Option<[i64; 6]>,
    pieces: usize,
    preferred_scalars: Option<String>,
    arrays: Vec<ArrayDecl>,
}

fn malformed(msg: impl Into<String>) -> LoadError {
    LoadError::MalformedVolume(msg.into())
}

fn attr(e: &BytesStart<'_>, key: &str) -> Result<Option<String>, LoadError> {
    for a in e.attributes() {
        let a = a.map_err(|err| malformed(format!("bad attribute: {err}")))?;
        if a.key.as_ref() == key.as_bytes() {
            let v = a
                .unescape_value()
                .map_err(|err| malformed(format!("bad attribute value: {err}")))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn parse_reals<const N: usize>(s: &str, what: &str) -> Result<[f64; N], LoadError> {
    let vals: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| malformed(format!("bad {what}: {s:?}")))?;
    vals.try_into()
        .map_err(|_| malformed(format!("{what} needs {N} values: {s:?}")))
}

fn parse_extent(s: &str) -> Result<[i64; 6], LoadError> {
    let vals: Vec<i64> = s
        .split_whitespace()
        .map(|t| t.parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| malformed(format!("bad extent: {s:?}")))?;
    let ext: [i64; 6] = vals
        .try_into()
        .map_err(|_| malformed(format!("extent needs 6 values: {s:?}")))?;
    for a in 0..3 {
        if ext[2 * a + 1] < ext[2 * a] {
            return Err(malformed(format!("inverted extent: {s:?}")));
        }
    }
    Ok(ext)
}

/// Scans the XML up to (not including) any `<AppendedData>` section and
/// returns the header plus the byte offset where that section's tag ends.
fn scan_xml(bytes: &[u8]) -> Result<(Header, Option<(usize, String)>), LoadError> {
    let mut reader = Reader::from_reader(bytes);
    let mut hdr = Header {
        spacing: [1.0; 3],
        ..Default::default()
    };
    let mut saw_root = false;
    let mut in_point_data = false;
    let mut current: Option<ArrayDecl> = None;
    let mut buf = Vec::new();
    loop {
        let ev = reader
            .read_event_into(&mut buf)
            .map_err(|e| malformed(format!("xml error: {e}")))?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(ev, Event::Empty(_));
                match e.name().as_ref() {
                    b"VTKFile" => {
                        saw_root = true;
                        let ty = attr(e, "type")?.unwrap_or_default();
                        if ty != "ImageData" {
                            return Err(LoadError::UnsupportedFormat(format!(
                                "VTKFile type {ty:?}"
                            )));
                        }
                        if let Some(c) = attr(e, "compressor")? {
                            if !c.is_empty() {
                                return Err(LoadError::UnsupportedFormat(format!(
                                    "compressed data ({c})"
                                )));
                            }
                        }
                        hdr.big_endian = attr(e, "byte_order")?.as_deref() == Some("BigEndian");
                        hdr.header_u64 = match attr(e, "header_type")?.as_deref() {
                            None | Some("UInt32") => false,
                            Some("UInt64") => true,
                            Some(other) => {
                                return Err(malformed(format!("header_type {other:?}")))
                            }
                        };
                    }
                    b"ImageData" => {
                        let we = attr(e, "WholeExtent")?
                            .ok_or_else(|| malformed("ImageData without WholeExtent"))?;
                        hdr.whole_extent = Some(parse_extent(&we)?);
                        if let Some(o) = attr(e, "Origin")? {
                            hdr.origin = parse_reals::<3>(&o, "Origin")?;
                        }
                        if let Some(s) = attr(e, "Spacing")? {
                            hdr.spacing = parse_reals::<3>(&s, "Spacing")?;
                        }
                    }
                    b"Piece" => {
                        hdr.pieces += 1;
                        if let Some(ext) = attr(e, "Extent")? {
                            hdr.piece_extent = Some(parse_extent(&ext)?);
                        }
                    }
                    b"PointData" => {
                        hdr.preferred_scalars = attr(e, "Scalars")?;
                        in_point_data = !is_empty;
                    }
                    b"DataArray" if in_point_data => {
                        let decl = ArrayDecl {
                            name: attr(e, "Name")?,
                            scalar_type: attr(e, "type")?,
                            format: attr(e, "format")?,
                            components: match attr(e, "NumberOfComponents")? {
                                Some(c) => c
                                    .trim()
                                    .parse()
                                    .map_err(|_| malformed("bad NumberOfComponents"))?,
                                None => 1,
                            },
                            offset: match attr(e, "offset")? {
                                Some(o) => {
                                    Some(o.trim().parse().map_err(|_| malformed("bad offset"))?)
                                }
                                None => None,
                            },
                            text: String::new(),
                        };
                        if is_empty {
                            hdr.arrays.push(decl);
                        } else {
                            current = Some(decl);
                        }
                    }
                    b"AppendedData" => {
                        let enc = attr(e, "encoding")?.unwrap_or_else(|| "raw".into());
                        let pos = reader.buffer_position() as usize;
                        return finish(hdr, saw_root, Some((pos, enc)));
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let Some(cur) = current.as_mut() {
                    let s = t
                        .unescape()
                        .map_err(|e| malformed(format!("bad text: {e}")))?;
                    cur.text.push_str(&s);
                }
            }
            Event::CData(t) => {
                if let Some(cur) = current.as_mut() {
                    cur.text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(ref e) => match e.name().as_ref() {
                b"DataArray" => {
                    if let Some(decl) = current.take() {
                        hdr.arrays.push(decl);
                    }
                }
                b"PointData" => in_point_data = false,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    finish(hdr, saw_root, None)
}

fn finish(
    hdr: Header,
    saw_root: bool,
    appended: Option<(usize, String)>,
) -> Result<(Header, Option<(usize, String)>), LoadError> {
    if !saw_root {
        return Err(LoadError::UnsupportedFormat("missing VTKFile root".into()));
    }
    Ok((hdr, appended))
}

fn decode_count(hdr: &Header, bytes: &[u8]) -> Option<usize> {
    if hdr.header_u64 {
        let b: [u8; 8] = bytes.get(..8)?.try_into().ok()?;
        let v = if hdr.big_endian {
            u64::from_be_bytes(b)
        } else {
            u64::from_le_bytes(b)
        };
        usize::try_from(v).ok()
    } else {
        let b: [u8; 4] = bytes.get(..4)?.try_into().ok()?;
        Some(if hdr.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        } as usize)
    }
}

/// Inline base64 blocks: VTK may encode header and payload as one stream or
/// as two separately padded streams; both are accepted.
fn decode_inline_binary(hdr: &Header, text: &str) -> Result<Vec<u8>, LoadError> {
    let compact: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    let hb = if hdr.header_u64 { 8 } else { 4 };
    if let Ok(all) = BASE64.decode(compact.as_bytes()) {
        if let Some(n) = decode_count(hdr, &all) {
            if all.len() >= hb && all.len() - hb == n {
                return Ok(all[hb..].to_vec());
            }
        }
    }
    let header_chars = hb.div_ceil(3) * 4;
    if compact.len() < header_chars {
        return Err(malformed("binary block shorter than its header"));
    }
    let head = BASE64
        .decode(&compact.as_bytes()[..header_chars])
        .map_err(|e| malformed(format!("base64 header: {e}")))?;
    let n = decode_count(hdr, &head).ok_or_else(|| malformed("bad binary header"))?;
    let body = BASE64
        .decode(&compact.as_bytes()[header_chars..])
        .map_err(|e| malformed(format!("base64 payload: {e}")))?;
    if body.len() != n {
        return Err(malformed(format!(
            "binary header says {n} bytes, payload has {}",
            body.len()
        )));
    }
    Ok(body)
}

fn decode_appended(
    hdr: &Header,
    bytes: &[u8],
    start: usize,
    encoding: &str,
    offset: usize,
) -> Result<Vec<u8>, LoadError> {
    let rest = bytes.get(start..).ok_or_else(|| malformed("appended data past eof"))?;
    let underscore = rest
        .iter()
        .position(|&b| b == b'_')
        .ok_or_else(|| malformed("appended data missing '_' marker"))?;
    let data = &rest[underscore + 1..];
    let hb: usize = if hdr.header_u64 { 8 } else { 4 };
    match encoding {
        "raw" => {
            let block = data
                .get(offset..)
                .ok_or_else(|| malformed("appended offset past eof"))?;
            let n = decode_count(hdr, block).ok_or_else(|| malformed("truncated block header"))?;
            block
                .get(hb..hb.checked_add(n).ok_or_else(|| malformed("block size overflow"))?)
                .map(|b| b.to_vec())
                .ok_or_else(|| malformed("appended block truncated"))
        }
        "base64" => {
            let end = data
                .windows(2)
                .position(|w| w == b"</")
                .unwrap_or(data.len());
            let text = std::str::from_utf8(&data[..end])
                .map_err(|_| malformed("appended base64 is not UTF-8"))?;
            let compact: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
            let block = compact
                .get(offset..)
                .ok_or_else(|| malformed("appended offset past eof"))?;
            decode_inline_binary(hdr, block)
        }
        other => Err(LoadError::UnsupportedFormat(format!(
            "appended encoding {other:?}"
        ))),
    }
}

/// Parses a `.vti` document.
pub fn parse_vti(bytes: &[u8], id: &str) -> Result<VolumeDataset, LoadError> {
    let (hdr, appended) = scan_xml(bytes)?;
    let whole = hdr
        .whole_extent
        .ok_or_else(|| LoadError::UnsupportedFormat("no ImageData element".into()))?;
    if hdr.pieces > 1 {
        return Err(LoadError::UnsupportedFormat("multi-piece ImageData".into()));
    }
    if let Some(pe) = hdr.piece_extent {
        if pe != whole {
            return Err(LoadError::UnsupportedFormat(
                "piece extent differs from whole extent".into(),
            ));
        }
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let span = whole[2 * a + 1]
            .checked_sub(whole[2 * a])
            .and_then(|d| d.checked_add(1))
            .ok_or_else(|| malformed("extent overflow"))?;
        dims[a] = usize::try_from(span).map_err(|_| malformed("extent overflow"))?;
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| malformed("dims overflow"))?;

    let single: Vec<&ArrayDecl> = hdr.arrays.iter().filter(|a| a.components == 1).collect();
    let array = hdr
        .preferred_scalars
        .as_deref()
        .and_then(|name| single.iter().find(|a| a.name.as_deref() == Some(name)))
        .or_else(|| single.first())
        .copied()
        .ok_or_else(|| malformed("no single-component point-data array"))?;
    let ty_name = array
        .scalar_type
        .as_deref()
        .ok_or_else(|| malformed("DataArray without type"))?;
    let ty = ScalarType::parse(ty_name)
        .ok_or_else(|| LoadError::UnsupportedFormat(format!("scalar type {ty_name:?}")))?;

    let format = array.format.as_deref().unwrap_or("ascii");
    let scalars: Vec<f64> = match format {
        "ascii" => array
            .text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed("non-numeric ascii scalar"))?,
        "binary" | "appended" => {
            let raw = if format == "binary" {
                decode_inline_binary(&hdr, &array.text)?
            } else {
                let (start, enc) = appended
                    .as_ref()
                    .ok_or_else(|| malformed("appended array without AppendedData"))?;
                decode_appended(&hdr, bytes, *start, enc, array.offset.unwrap_or(0))?
            };
            let sz = ty.size();
            if raw.len() % sz != 0 {
                return Err(malformed("binary payload not a multiple of the scalar size"));
            }
            raw.chunks_exact(sz)
                .map(|c| ty.decode(c, hdr.big_endian))
                .collect()
        }
        other => return Err(LoadError::UnsupportedFormat(format!("format {other:?}"))),
    };
    if scalars.len() != n {
        return Err(malformed(format!(
            "extent implies {n} scalars, array has {}",
            scalars.len()
        )));
    }
    let mut origin = hdr.origin;
    for a in 0..3 {
        origin[a] += whole[2 * a] as f64 * hdr.spacing[a];
    }
    let field = array.name.clone().unwrap_or_else(|| "scalars".into());
    Ok(VolumeDataset::new(
        id,
        dims,
        hdr.spacing,
        origin,
        field,
        scalars,
    )?)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Serializes as `Float64` point data. Both encodings round-trip bit-exactly.
pub fn write_vti(vol: &VolumeDataset, encoding: Encoding) -> String {
    let [nx, ny, nz] = vol.dims();
    let [ox, oy, oz] = vol.origin();
    let [sx, sy, sz] = vol.spacing();
    let name = xml_escape(vol.field_name());
    let extent = format!("0 {} 0 {} 0 {}", nx - 1, ny - 1, nz - 1);
    let (fmt, body) = match encoding {
        Encoding::Ascii => {
            let mut s = String::with_capacity(vol.voxel_count() * 8);
            for (i, v) in vol.scalars().iter().enumerate() {
                if i > 0 {
                    s.push(if i % 6 == 0 { '\n' } else { ' ' });
                }
                s.push_str(&format!("{v:?}"));
            }
            ("ascii", s)
        }
        Encoding::Base64 => {
            let payload_len = vol.voxel_count() * 8;
            let mut raw = Vec::with_capacity(8 + payload_len);
            raw.extend_from_slice(&(payload_len as u64).to_le_bytes());
            for v in vol.scalars() {
                raw.extend_from_slice(&v.to_le_bytes());
            }
            ("binary", BASE64.encode(raw))
        }
    };
    let (lo, hi) = vol.scalar_range();
    format!(
        "<?xml version=\"1.0\"?>\n\
<VTKFile type=\"ImageData\" version=\"1.0\" byte_order=\"LittleEndian\" header_type=\"UInt64\">\n\
  <ImageData WholeExtent=\"{extent}\" Origin=\"{ox:?} {oy:?} {oz:?}\" Spacing=\"{sx:?} {sy:?} {sz:?}\">\n\
    <Piece Extent=\"{extent}\">\n\
      <PointData Scalars=\"{name}\">\n\
        <DataArray type=\"Float64\" Name=\"{name}\" format=\"{fmt}\" RangeMin=\"{lo:?}\" RangeMax=\"{hi:?}\">\n\
{body}\n\
        </DataArray>\n\
      </PointData>\n\
      <CellData>\n\
      </CellData>\n\
    </Piece>\n\
  </ImageData>\n\
</VTKFile>\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(format: &str, ty: &str, body: &str, header_type: &str) -> String {
        format!(
            r#"<?xml version="1.0"?>
<VTKFile type="ImageData" version="1.0" byte_order="LittleEndian" header_type="{header_type}">
  <ImageData WholeExtent="0 1 0 1 0 0" Origin="0 0 0" Spacing="1 1 1">
    <Piece Extent="0 1 0 1 0 0">
      <PointData Scalars="ImageFile">
        <DataArray type="{ty}" Name="ImageFile" format="{format}">{body}</DataArray>
      </PointData>
    </Piece>
  </ImageData>
</VTKFile>"#
        )
    }

    #[test]
    fn ascii_uint16() {
        let v = parse_vti(doc("ascii", "UInt16", "0 1 2 3", "UInt32").as_bytes(), "h").unwrap();
        assert_eq!(v.dims(), [2, 2, 1]);
        assert_eq!(v.scalars(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(v.field_name(), "ImageFile");
    }

    #[test]
    fn binary_single_stream_and_split_stream() {
        let payload: Vec<u8> = [0u16, 1, 2, 3].iter().flat_map(|v| v.to_le_bytes()).collect();
        let mut joined = (payload.len() as u32).to_le_bytes().to_vec();
        joined.extend_from_slice(&payload);
        let one = BASE64.encode(&joined);
        let v = parse_vti(doc("binary", "UInt16", &one, "UInt32").as_bytes(), "h").unwrap();
        assert_eq!(v.scalars(), &[0.0, 1.0, 2.0, 3.0]);

        // header and data encoded as separate padded streams
        let split = format!(
            "{}{}",
            BASE64.encode((payload.len() as u32).to_le_bytes()),
            BASE64.encode(&payload)
        );
        let v = parse_vti(doc("binary", "UInt16", &split, "UInt32").as_bytes(), "h").unwrap();
        assert_eq!(v.scalars(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn appended_raw() {
        let mut bytes = br#"<?xml version="1.0"?>
<VTKFile type="ImageData" version="1.0" byte_order="LittleEndian" header_type="UInt32">
  <ImageData WholeExtent="0 1 0 0 0 0" Origin="0 0 0" Spacing="1 1 1">
    <Piece Extent="0 1 0 0 0 0">
      <PointData Scalars="s">
        <DataArray type="Float32" Name="s" format="appended" offset="0"/>
      </PointData>
    </Piece>
  </ImageData>
  <AppendedData encoding="raw">
   _"#
        .to_vec();
        bytes.extend_from_slice(&8u32.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        bytes.extend_from_slice(b"\n  </AppendedData>\n</VTKFile>\n");
        let v = parse_vti(&bytes, "a").unwrap();
        assert_eq!(v.scalars(), &[1.5, -2.0]);
    }

    #[test]
    fn extent_offset_shifts_origin() {
        let text = r#"<VTKFile type="ImageData" version="0.1">
  <ImageData WholeExtent="2 2 0 0 0 0" Origin="1 0 0" Spacing="0.5 1 1">
    <Piece Extent="2 2 0 0 0 0"><PointData>
      <DataArray type="Float64" Name="f" format="ascii">4.25</DataArray>
    </PointData></Piece>
  </ImageData>
</VTKFile>"#;
        let v = parse_vti(text.as_bytes(), "o").unwrap();
        assert_eq!(v.origin(), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_count_mismatch_and_compression() {
        let e = parse_vti(doc("ascii", "UInt8", "0 1 2", "UInt32").as_bytes(), "h").unwrap_err();
        assert!(matches!(e, LoadError::MalformedVolume(_)));
        let compressed = doc("ascii", "UInt8", "0 1 2 3", "UInt32").replace(
            "header_type=\"UInt32\"",
            "header_type=\"UInt32\" compressor=\"vtkZLibDataCompressor\"",
        );
        let e = parse_vti(compressed.as_bytes(), "h").unwrap_err();
        assert!(matches!(e, LoadError::UnsupportedFormat(_)));
        let poly = "<VTKFile type=\"PolyData\"></VTKFile>";
        assert!(matches!(
            parse_vti(poly.as_bytes(), "p"),
            Err(LoadError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn writer_round_trips_bit_exact() {
        let vol = VolumeDataset::from_fn("w", [3, 2, 2], |x, y, z| {
            (x as f64 * 0.1 - y as f64 / 3.0) * (z as f64 + 1e-7)
        })
        .unwrap();
        for enc in [Encoding::Ascii, Encoding::Base64] {
            let text = write_vti(&vol, enc);
            let back = parse_vti(text.as_bytes(), "w").unwrap();
            let a: Vec<u64> = vol.scalars().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.scalars().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{enc:?}");
        }
    }
}
