use std::path::Path;

use crate::error::{Error, Result};
use crate::stokes::Image8;

use super::write_atomic;

pub fn encode_png(image: &Image8) -> Result<Vec<u8>> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Png(format!("{c} channels are not supported"))),
    };
    if image.data.len() != image.width * image.height * image.channels {
        return Err(Error::Png("raster size does not match its dimensions".into()));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&image.data)
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, image: &Image8) -> Result<()> {
    write_atomic(path, &encode_png(image)?)
}
