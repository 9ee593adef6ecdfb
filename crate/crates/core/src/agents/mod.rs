//! Scanner and locator agents.
//!
//! Agents see images through [`AgentImage`], a lazy view of a screen region at
//! some magnification. Pixels are only produced when a backend actually needs
//! to send them; simulated agents read the view's frame instead.

mod oracle;
mod remote;

use std::io::Cursor;

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat, RgbImage};
use thiserror::Error;

use crate::geometry::{ImageSize, PointPx, RectPx};
use crate::protocol::ParseError;

pub use oracle::{OracleConfig, OracleLocator, OracleScanner, OracleTruth};
pub use remote::{
    BackendConfig, HttpResponse, RateLimiter, RemoteLocator, RemoteScanner, ReqwestTransport,
    Transport, TransportError,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend failed after {attempts} attempt(s) (last status {last_status:?}): {message}")]
    Exhausted {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("backend rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Decode(String),
    #[error("locator reply unparseable: {0}")]
    LocatorParse(#[from] ParseError),
    #[error("prompt not recognized by simulated scanner")]
    UnrecognizedPrompt,
    #[error("image encoding failed: {0}")]
    Image(String),
}

/// Anything that can produce the pixels of a screenshot region.
pub trait Screen: Send + Sync {
    fn size(&self) -> ImageSize;
    fn render(&self, region: RectPx) -> RgbImage;
}

impl Screen for RgbImage {
    fn size(&self) -> ImageSize {
        ImageSize {
            width: self.width(),
            height: self.height(),
        }
    }

    fn render(&self, region: RectPx) -> RgbImage {
        image::imageops::crop_imm(
            self,
            region.x1() as u32,
            region.y1() as u32,
            region.width() as u32,
            region.height() as u32,
        )
        .to_image()
    }
}

/// A region of a screen, magnified by an integer factor with
/// nearest-neighbor resampling when materialized.
#[derive(Clone, Copy)]
pub struct AgentImage<'a> {
    screen: &'a dyn Screen,
    region: RectPx,
    scale: u32,
}

impl std::fmt::Debug for AgentImage<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentImage")
            .field("region", &self.region)
            .field("scale", &self.scale)
            .finish()
    }
}

impl<'a> AgentImage<'a> {
    pub fn full(screen: &'a dyn Screen) -> Self {
        Self {
            screen,
            region: screen.size().rect(),
            scale: 1,
        }
    }

    /// Panics if `region` is not inside the screen or `scale` is zero.
    pub fn view(screen: &'a dyn Screen, region: RectPx, scale: u32) -> Self {
        assert!(screen.size().rect().contains_rect(&region), "view {region} outside screen");
        assert!(scale >= 1);
        Self {
            screen,
            region,
            scale,
        }
    }

    /// Global-frame region this image shows.
    pub fn region(&self) -> RectPx {
        self.region
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Size of the image as the agent sees it.
    pub fn size(&self) -> ImageSize {
        let s = self.region.size();
        ImageSize {
            width: s.width * self.scale,
            height: s.height * self.scale,
        }
    }

    pub fn screen_size(&self) -> ImageSize {
        self.screen.size()
    }

    pub fn materialize(&self) -> RgbImage {
        let pixels = self.screen.render(self.region);
        if self.scale == 1 {
            return pixels;
        }
        let size = self.size();
        image::imageops::resize(&pixels, size.width, size.height, FilterType::Nearest)
    }

    /// PNG bytes, downscaled to at most `max_pixels` when given. Returns the
    /// encoded size so callers can map coordinates back.
    pub fn to_png(&self, max_pixels: Option<u64>) -> Result<(Vec<u8>, ImageSize), AgentError> {
        let mut img = self.materialize();
        if let Some(cap) = max_pixels {
            let target = downscaled_size(self.size(), cap);
            if target != self.size() {
                img = image::imageops::resize(&img, target.width, target.height, FilterType::Triangle);
            }
        }
        let size = ImageSize {
            width: img.width(),
            height: img.height(),
        };
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img)
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| AgentError::Image(e.to_string()))?;
        Ok((out.into_inner(), size))
    }
}

/// Largest size with the same aspect ratio and at most `max_pixels` pixels.
pub fn downscaled_size(size: ImageSize, max_pixels: u64) -> ImageSize {
    let pixels = size.width as u64 * size.height as u64;
    if pixels <= max_pixels.max(1) {
        return size;
    }
    let ratio = (max_pixels.max(1) as f64 / pixels as f64).sqrt();
    ImageSize {
        width: ((size.width as f64 * ratio).floor() as u32).max(1),
        height: ((size.height as f64 * ratio).floor() as u32).max(1),
    }
}

/// Maps a point from a resized image back to the original image frame.
pub fn rescale_point(p: PointPx, from: ImageSize, to: ImageSize) -> PointPx {
    PointPx::new(
        (p.x * to.width as i64).div_euclid(from.width as i64),
        (p.y * to.height as i64).div_euclid(from.height as i64),
    )
}

/// The generalist: reads a prompt plus images and answers in text.
pub trait ScannerAgent: Send + Sync {
    fn complete(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError>;
}

/// The specialist: returns a click point in the local frame of `image`
/// (the magnified frame, when the view is magnified).
pub trait LocatorAgent: Send + Sync {
    fn ground(&self, instruction: &str, image: &AgentImage<'_>) -> Result<PointPx, AgentError>;
}

impl<T: ScannerAgent + ?Sized> ScannerAgent for Box<T> {
    fn complete(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        (**self).complete(prompt, images)
    }
}

impl<T: LocatorAgent + ?Sized> LocatorAgent for Box<T> {
    fn ground(&self, instruction: &str, image: &AgentImage<'_>) -> Result<PointPx, AgentError> {
        (**self).ground(instruction, image)
    }
}

impl<T: ScannerAgent + ?Sized> ScannerAgent for std::sync::Arc<T> {
    fn complete(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        (**self).complete(prompt, images)
    }
}

impl<T: LocatorAgent + ?Sized> LocatorAgent for std::sync::Arc<T> {
    fn ground(&self, instruction: &str, image: &AgentImage<'_>) -> Result<PointPx, AgentError> {
        (**self).ground(instruction, image)
    }
}
