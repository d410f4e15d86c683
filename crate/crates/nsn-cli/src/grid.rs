//! Tile generated tensors into one raster grid.
//!
//! Each tensor is quantized to 8-bit on its own and blitted unchanged, so a
//! tile cut back out of the grid is byte-identical to the tensor saved
//! individually.

use anyhow::{bail, Result};
use nsn::dataset::tensor_to_image;
use nsn::Tensor3;

/// Assemble `tiles` into a row-major grid with `cols` tiles per row.
pub fn tile_grid(tiles: &[Tensor3<f32>], cols: usize) -> Result<image::DynamicImage> {
    if tiles.is_empty() {
        bail!("no tiles to assemble");
    }
    let cols = cols.max(1).min(tiles.len());
    let (h, w, c) = tiles[0].shape();
    if tiles.iter().any(|t| t.shape() != (h, w, c)) {
        bail!("tiles do not share one shape");
    }
    let rows = tiles.len().div_ceil(cols);

    let rasters: Vec<image::DynamicImage> =
        tiles.iter().map(tensor_to_image).collect::<nsn::Result<_>>()?;

    let (tile_w, tile_h) = (w as u32, h as u32);
    let (grid_w, grid_h) = (tile_w * cols as u32, tile_h * rows as u32);

    if c == 1 {
        let mut canvas = image::GrayImage::new(grid_w, grid_h);
        for (i, raster) in rasters.iter().enumerate() {
            let (x0, y0) = ((i % cols) as u32 * tile_w, (i / cols) as u32 * tile_h);
            let tile = raster.as_luma8().expect("single-channel raster");
            for (x, y, px) in tile.enumerate_pixels() {
                canvas.put_pixel(x0 + x, y0 + y, *px);
            }
        }
        Ok(image::DynamicImage::ImageLuma8(canvas))
    } else {
        let mut canvas = image::RgbImage::new(grid_w, grid_h);
        for (i, raster) in rasters.iter().enumerate() {
            let (x0, y0) = ((i % cols) as u32 * tile_w, (i / cols) as u32 * tile_h);
            let tile = raster.as_rgb8().expect("three-channel raster");
            for (x, y, px) in tile.enumerate_pixels() {
                canvas.put_pixel(x0 + x, y0 + y, *px);
            }
        }
        Ok(image::DynamicImage::ImageRgb8(canvas))
    }
}

/// Cut tile `index` back out of a grid assembled with [`tile_grid`],
/// keeping the grid's color type.
pub fn extract_tile(
    grid: &image::DynamicImage,
    tile_h: usize,
    tile_w: usize,
    cols: usize,
    index: usize,
) -> image::DynamicImage {
    let x0 = (index % cols) * tile_w;
    let y0 = (index / cols) * tile_h;
    grid.crop_imm(x0 as u32, y0 as u32, tile_w as u32, tile_h as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(v: f32) -> Tensor3<f32> {
        Tensor3::filled(4, 4, 1, v)
    }

    #[test]
    fn grid_dimensions_follow_the_column_count() {
        let tiles: Vec<_> = (0..6).map(|i| tile(i as f32 / 6.0)).collect();
        let grid = tile_grid(&tiles, 4).unwrap();
        assert_eq!((grid.width(), grid.height()), (16, 8)); // 4 cols x 2 rows of 4x4
        let single = tile_grid(&tiles[..1], 8).unwrap();
        assert_eq!((single.width(), single.height()), (4, 4));
    }

    #[test]
    fn extracted_tiles_match_individual_rasterization() {
        let tiles: Vec<_> = (0..5).map(|i| tile(i as f32 / 5.0)).collect();
        let grid = tile_grid(&tiles, 3).unwrap();
        for (i, t) in tiles.iter().enumerate() {
            let cut = extract_tile(&grid, 4, 4, 3, i);
            let direct = tensor_to_image(t).unwrap();
            assert_eq!(cut.as_luma8().unwrap().as_raw(), direct.as_luma8().unwrap().as_raw());
        }
    }

    #[test]
    fn rgb_tiles_are_supported() {
        let tiles = vec![Tensor3::filled(2, 2, 3, 0.5); 4];
        let grid = tile_grid(&tiles, 2).unwrap();
        assert_eq!((grid.width(), grid.height()), (4, 4));
        assert!(grid.as_rgb8().is_some());
    }

    #[test]
    fn mismatched_tiles_are_rejected() {
        let tiles = vec![tile(0.1), Tensor3::filled(5, 4, 1, 0.2)];
        assert!(tile_grid(&tiles, 2).is_err());
    }
}
