//! Deterministic synthetic videos with exact ground truth: a static
//! textured background, bright bouncing objects, and pixel noise.

use super::cdnet::VideoSequence;
use super::DataError;
use image::{GrayImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub object_count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 64,
            frame_count: 120,
            object_count: 2,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy)]
enum ObjectShape {
    Square,
    Disc,
}

struct MovingObject {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    size: f64,
    shape: ObjectShape,
    color: [f64; 3],
}

impl MovingObject {
    fn covers(&self, px: usize, py: usize) -> bool {
        let dx = px as f64 + 0.5 - self.x;
        let dy = py as f64 + 0.5 - self.y;
        let r = self.size / 2.0;
        match self.shape {
            ObjectShape::Square => dx.abs() <= r && dy.abs() <= r,
            ObjectShape::Disc => dx * dx + dy * dy <= r * r,
        }
    }

    fn step(&mut self, w: f64, h: f64) {
        self.x += self.vx;
        self.y += self.vy;
        let r = self.size / 2.0;
        if self.x < r {
            self.x = 2.0 * r - self.x;
            self.vx = -self.vx;
        }
        if self.x > w - r {
            self.x = 2.0 * (w - r) - self.x;
            self.vx = -self.vx;
        }
        if self.y < r {
            self.y = 2.0 * r - self.y;
            self.vy = -self.vy;
        }
        if self.y > h - r {
            self.y = 2.0 * (h - r) - self.y;
            self.vy = -self.vy;
        }
    }
}

/// Dark background texture: values on a coarse grid interpolated
/// bilinearly, identical for every frame so only the objects move.
fn background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    const CELL: usize = 8;
    let gw = cfg.width / CELL + 2;
    let gh = cfg.height / CELL + 2;
    let grid: Vec<[f64; 3]> = (0..gw * gh)
        .map(|_| {
            let mut c = [0.0; 3];
            for v in &mut c {
                *v = rng.gen_range(0.15..0.45);
            }
            c
        })
        .collect();
    let mut bg = vec![[0.0; 3]; cfg.width * cfg.height];
    for y in 0..cfg.height {
        let fy = y as f64 / CELL as f64;
        let gy = fy as usize;
        let ty = fy - gy as f64;
        for x in 0..cfg.width {
            let fx = x as f64 / CELL as f64;
            let gx = fx as usize;
            let tx = fx - gx as f64;
            let p = &mut bg[y * cfg.width + x];
            for c in 0..3 {
                let a = grid[gy * gw + gx][c];
                let b = grid[gy * gw + gx + 1][c];
                let d = grid[(gy + 1) * gw + gx][c];
                let e = grid[(gy + 1) * gw + gx + 1][c];
                p[c] = a * (1.0 - tx) * (1.0 - ty)
                    + b * tx * (1.0 - ty)
                    + d * (1.0 - tx) * ty
                    + e * tx * ty;
            }
        }
    }
    bg
}

/// Render the whole sequence. Evaluation starts at frame 51 so every
/// evaluable frame has a full default-length history.
pub fn synth_sequence(cfg: &SynthConfig) -> Result<VideoSequence, DataError> {
    if cfg.width == 0 || cfg.height == 0 || cfg.frame_count == 0 {
        return Err(DataError::Ingestion("empty synthetic sequence".into()));
    }
    if cfg.frame_count <= 50 {
        return Err(DataError::Ingestion(format!(
            "synthetic sequence needs more than 50 frames, got {}",
            cfg.frame_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bg = background(cfg, &mut rng);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut objects: Vec<MovingObject> = (0..cfg.object_count)
        .map(|_| {
            let size = rng.gen_range(10.0..18.0);
            let speed = rng.gen_range(1.5..2.5);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = size / 2.0;
            MovingObject {
                x: rng.gen_range(r..(w - r).max(r + 1e-9)),
                y: rng.gen_range(r..(h - r).max(r + 1e-9)),
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
                size,
                shape: if rng.gen_bool(0.5) {
                    ObjectShape::Square
                } else {
                    ObjectShape::Disc
                },
                color: {
                    let mut c = [0.0; 3];
                    for v in &mut c {
                        *v = rng.gen_range(0.65..1.0);
                    }
                    c
                },
            }
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0))
        .map_err(|e| DataError::Ingestion(format!("bad noise sigma: {}", e)))?;
    let mut frames = Vec::with_capacity(cfg.frame_count);
    let mut gts = Vec::with_capacity(cfg.frame_count);
    for _ in 0..cfg.frame_count {
        let mut img = RgbImage::new(cfg.width as u32, cfg.height as u32);
        let mut gt = GrayImage::new(cfg.width as u32, cfg.height as u32);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let mut px = bg[y * cfg.width + x];
                let mut fg = false;
                for o in &objects {
                    if o.covers(x, y) {
                        px = o.color;
                        fg = true;
                        break;
                    }
                }
                let mut q = [0u8; 3];
                for c in 0..3 {
                    let v = px[c] + noise.sample(&mut rng);
                    q[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
                img.put_pixel(x as u32, y as u32, image::Rgb(q));
                gt.put_pixel(
                    x as u32,
                    y as u32,
                    image::Luma([if fg { 255 } else { 0 }]),
                );
            }
        }
        frames.push(img);
        gts.push(gt);
        for o in &mut objects {
            o.step(w, h);
        }
    }
    Ok(VideoSequence::in_memory(
        "synthetic",
        &format!("seed{}", cfg.seed),
        frames,
        gts,
        51,
        cfg.frame_count,
    ))
}
