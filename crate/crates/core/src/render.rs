//! SVG inspection views of a layout.
//!
//! Top view: footprints on the floor, audience at the bottom (`y = 0`).
//! Front view: x/h silhouettes as seen from the audience, with occlusion
//! boxes on the back wall when given. Output bytes depend only on the input.

use std::fmt::Write as _;

use crate::background::WallBox;
use crate::projection::OcclusionBox;
use crate::schema::LayoutRecord;

const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn label(r: &LayoutRecord) -> String {
    match &r.id {
        Some(id) => format!("{id} ({})", r.category),
        None => r.category.clone(),
    }
}

fn open(n: f64, title: &str) -> String {
    let side = n + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="{} {} {side} {side}">"#,
        -MARGIN, -MARGIN
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(
        s,
        r##"<rect class="stage" x="0" y="0" width="{n}" height="{n}" fill="none" stroke="#000" stroke-width="2"/>"##
    );
    s
}

fn rect(s: &mut String, class: &str, x: f64, y: f64, w: f64, h: f64, style: &str, text: &str) {
    let _ = writeln!(
        s,
        r#"<g class="{class}"><rect x="{x}" y="{y}" width="{w}" height="{h}" {style}/><text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text></g>"#,
        x + 0.5 * w,
        y + 0.5 * h,
        escape(text)
    );
}

/// Plan view: one labelled rectangle per footprint.
pub fn render_top(entities: &[LayoutRecord], stage_size: f64, title: &str) -> String {
    let n = stage_size;
    let mut s = open(n, title);
    for e in entities {
        let b = &e.bbox;
        rect(
            &mut s,
            "entity",
            b.x0,
            n - b.y1,
            b.length(),
            b.width(),
            r##"fill="#8fb3d9" fill-opacity="0.6" stroke="#234""##,
            &label(e),
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Elevation from the audience: silhouettes, occlusion boxes and optional
/// background regions.
pub fn render_front(
    entities: &[LayoutRecord],
    stage_size: f64,
    title: &str,
    occlusions: &[OcclusionBox],
    background: &[WallBox],
) -> String {
    let n = stage_size;
    let mut s = open(n, title);
    for o in occlusions {
        let r = o.rect();
        rect(
            &mut s,
            "occlusion",
            r.x0,
            n - r.h1,
            r.x1 - r.x0,
            r.h1 - r.h0,
            r##"fill="#999" fill-opacity="0.25" stroke="#666" stroke-dasharray="6 4""##,
            "",
        );
    }
    for b in background {
        let r = &b.rect;
        rect(
            &mut s,
            "background",
            r.x0,
            n - r.h1,
            r.x1 - r.x0,
            r.h1 - r.h0,
            r##"fill="#e8c36a" fill-opacity="0.5" stroke="#a07d1c""##,
            &b.label,
        );
    }
    for e in entities {
        let b = &e.bbox;
        rect(
            &mut s,
            "entity",
            b.x0,
            n - b.h1,
            b.length(),
            b.height(),
            r##"fill="#8fb3d9" fill-opacity="0.6" stroke="#234""##,
            &label(e),
        );
    }
    s.push_str("</svg>\n");
    s
}
