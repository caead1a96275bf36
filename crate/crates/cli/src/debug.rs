//! Per-stage raster dumps for a world built with artifacts kept.

use std::path::Path;

use anyhow::{Context, Result};

use panofuse::codec::{depth_preview, save_mask_png, save_pfm, save_png};
use panofuse::geom::DepthMap;
use panofuse::render::{render_eqr, SplatParams};
use panofuse::world::WorldBundle;

fn depth(d: &DepthMap, dir: &Path, stem: &str) -> Result<()> {
    save_pfm(d, &dir.join(format!("{stem}.pfm")))?;
    save_png(&depth_preview(d), &dir.join(format!("{stem}.png")))?;
    Ok(())
}

/// Writes every stage of every sphere and fill into `dir`; returns the file
/// count.
pub fn dump(bundle: &WorldBundle, dir: &Path) -> Result<usize> {
    let art = bundle
        .artifacts
        .as_ref()
        .context("world was built without artifacts")?;
    std::fs::create_dir_all(dir)?;
    let before = std::fs::read_dir(dir)?.count();
    let (w, h) = (
        bundle.provenance.config.width,
        bundle.provenance.config.height,
    );
    for (i, s) in art.spheres.iter().enumerate() {
        let p = format!("sphere{i}");
        save_png(&s.image, &dir.join(format!("{p}_image.png")))?;
        depth(&s.depth, dir, &format!("{p}_depth"))?;
        if let Some((ldp, dbg)) = &s.ldp {
            save_mask_png(&dbg.edges, &dir.join(format!("{p}_edges.png")))?;
            for (k, m) in dbg.masks.iter().enumerate() {
                save_mask_png(m, &dir.join(format!("{p}_segment{k}.png")))?;
            }
            save_mask_png(&ldp.fg_mask, &dir.join(format!("{p}_fg_mask.png")))?;
            save_png(&ldp.fg_image, &dir.join(format!("{p}_fg_image.png")))?;
            depth(&ldp.fg_depth, dir, &format!("{p}_fg_depth"))?;
            save_png(&ldp.bg_image, &dir.join(format!("{p}_bg_image.png")))?;
            depth(&ldp.bg_depth, dir, &format!("{p}_bg_depth"))?;
        }
    }
    for (i, o) in art.opened.iter().enumerate() {
        let r = render_eqr(&o.cloud, &o.center, w, h, &SplatParams::exact())?;
        save_png(&r.image, &dir.join(format!("opened{i}_image.png")))?;
        depth(&r.depth, dir, &format!("opened{i}_depth"))?;
    }
    for (i, f) in art.fills.iter().enumerate() {
        let Some(f) = f else { continue };
        let p = format!("fill{i}");
        save_png(&f.render_image, &dir.join(format!("{p}_render.png")))?;
        depth(&f.render_depth, dir, &format!("{p}_render_depth"))?;
        save_mask_png(&f.visibility, &dir.join(format!("{p}_visibility.png")))?;
        save_png(&f.inpainted, &dir.join(format!("{p}_inpainted.png")))?;
        depth(&f.estimated_depth, dir, &format!("{p}_estimated_depth"))?;
        depth(&f.blended_depth, dir, &format!("{p}_blended_depth"))?;
    }
    Ok(std::fs::read_dir(dir)?.count() - before)
}
