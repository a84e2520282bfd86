use super::bitreader::BitReader;
use super::{ParseError, Result};

pub const VOP_START: u8 = 0xB6;

/// Fields of the video object layer that the P-VOP decoder needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolHeader {
    pub verid: u8,
    pub width: u32,
    pub height: u32,
    pub time_increment_resolution: u32,
    pub time_increment_bits: u32,
    pub resync_marker_disable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VopType {
    I,
    P,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VopHeader {
    pub coding_type: VopType,
    pub modulo_time_base: u32,
    pub time_increment: u32,
    pub coded: bool,
    pub rounding_type: bool,
    pub intra_dc_vlc_thr: u8,
    pub quant: u8,
    /// 1..=7; meaningless for I-VOPs.
    pub fcode_forward: u8,
}

fn unsupported(feature: &'static str, bit_offset: usize) -> ParseError {
    ParseError::Unsupported { feature, bit_offset }
}

/// Parses a VOL header; `r` is positioned just after the start code.
pub fn parse_vol(r: &mut BitReader<'_>) -> Result<VolHeader> {
    r.skip(1)?; // random_accessible_vol
    r.skip(8)?; // video_object_type_indication
    let verid = if r.read_bit()? {
        let v = r.read(4)? as u8;
        r.skip(3)?; // priority
        v
    } else {
        1
    };
    if r.read(4)? == 15 {
        r.skip(16)?; // extended PAR
    }
    if r.read_bit()? {
        // vol_control_parameters
        r.skip(2)?; // chroma_format
        r.skip(1)?; // low_delay
        if r.read_bit()? {
            r.skip(15)?;
            r.marker("first_half_bit_rate")?;
            r.skip(15)?;
            r.marker("latter_half_bit_rate")?;
            r.skip(15)?;
            r.marker("first_half_vbv_buffer_size")?;
            r.skip(3)?;
            r.skip(11)?;
            r.marker("first_half_vbv_occupancy")?;
            r.skip(15)?;
            r.marker("latter_half_vbv_occupancy")?;
        }
    }
    let at = r.position();
    let shape = r.read(2)?;
    if shape != 0 {
        return Err(unsupported("non-rectangular shape", at));
    }
    r.marker("video_object_layer_shape")?;
    let time_increment_resolution = r.read(16)?;
    if time_increment_resolution == 0 {
        return Err(ParseError::Syntax {
            what: "vop_time_increment_resolution is 0".into(),
            bit_offset: r.position() - 16,
        });
    }
    let time_increment_bits = (32 - (time_increment_resolution - 1).leading_zeros()).max(1);
    r.marker("vop_time_increment_resolution")?;
    if r.read_bit()? {
        r.skip(time_increment_bits as usize)?; // fixed_vop_time_increment
    }
    r.marker("fixed_vop_rate")?;
    let width = r.read(13)?;
    r.marker("video_object_layer_width")?;
    let height = r.read(13)?;
    r.marker("video_object_layer_height")?;
    let at = r.position();
    if r.read_bit()? {
        return Err(unsupported("interlaced", at));
    }
    let at = r.position();
    if !r.read_bit()? {
        return Err(unsupported("overlapped block motion compensation", at));
    }
    let at = r.position();
    let sprite = r.read(if verid == 1 { 1 } else { 2 })?;
    match sprite {
        0 => {}
        1 => return Err(unsupported("static sprite", at)),
        _ => return Err(unsupported("global motion compensation", at)),
    }
    let at = r.position();
    if r.read_bit()? {
        return Err(unsupported("not_8_bit", at));
    }
    let at = r.position();
    if r.read_bit()? {
        return Err(unsupported("mpeg_quant", at));
    }
    if verid != 1 {
        let at = r.position();
        if r.read_bit()? {
            return Err(unsupported("quarter_sample", at));
        }
    }
    let at = r.position();
    if !r.read_bit()? {
        return Err(unsupported("complexity estimation", at));
    }
    let resync_marker_disable = r.read_bit()?;
    let at = r.position();
    if r.read_bit()? {
        return Err(unsupported("data_partitioning", at));
    }
    if verid != 1 {
        let at = r.position();
        if r.read_bit()? {
            return Err(unsupported("newpred", at));
        }
        let at = r.position();
        if r.read_bit()? {
            return Err(unsupported("reduced resolution VOP", at));
        }
    }
    let at = r.position();
    if r.read_bit()? {
        return Err(unsupported("scalability", at));
    }
    if width == 0 || height == 0 {
        return Err(ParseError::Syntax {
            what: format!("VOL size {width}x{height}"),
            bit_offset: at,
        });
    }
    Ok(VolHeader {
        verid,
        width,
        height,
        time_increment_resolution,
        time_increment_bits,
        resync_marker_disable,
    })
}

/// Parses a VOP header; `r` is positioned just after the start code.
pub fn parse_vop(r: &mut BitReader<'_>, vol: &VolHeader) -> Result<VopHeader> {
    let at = r.position();
    let coding_type = match r.read(2)? {
        0 => VopType::I,
        1 => VopType::P,
        2 => return Err(unsupported("B-VOP", at)),
        _ => return Err(unsupported("S-VOP", at)),
    };
    let mut modulo_time_base = 0;
    while r.read_bit()? {
        modulo_time_base += 1;
    }
    r.marker("modulo_time_base")?;
    let time_increment = r.read(vol.time_increment_bits)?;
    r.marker("vop_time_increment")?;
    let coded = r.read_bit()?;
    let mut hdr = VopHeader {
        coding_type,
        modulo_time_base,
        time_increment,
        coded,
        rounding_type: false,
        intra_dc_vlc_thr: 0,
        quant: 0,
        fcode_forward: 1,
    };
    if !coded {
        return Ok(hdr);
    }
    if coding_type == VopType::P {
        hdr.rounding_type = r.read_bit()?;
    }
    hdr.intra_dc_vlc_thr = r.read(3)? as u8;
    let at = r.position();
    hdr.quant = r.read(5)? as u8;
    if hdr.quant == 0 {
        return Err(ParseError::Syntax {
            what: "vop_quant is 0".into(),
            bit_offset: at,
        });
    }
    if coding_type == VopType::P {
        let at = r.position();
        hdr.fcode_forward = r.read(3)? as u8;
        if hdr.fcode_forward == 0 {
            return Err(ParseError::Syntax {
                what: "vop_fcode_forward is 0".into(),
                bit_offset: at,
            });
        }
    }
    Ok(hdr)
}
