//! Scenario images: a ground-truth label map painted with a fixed palette
//! as an uncompressed 24-bit BMP, with every class except the highlighted
//! one faded towards grey.

use costsight_core::decision::{LabelMap, IGNORE};

const PALETTE: [[u8; 3]; 6] = [
    [128, 64, 128], // drivable
    [244, 35, 232], // nondrivable
    [70, 70, 70],   // static
    [250, 170, 30], // info
    [220, 20, 60],  // human
    [0, 0, 142],    // dynamic
];
const VOID: [u8; 3] = [0, 0, 0];

fn color(label: u8, highlight: Option<u8>) -> [u8; 3] {
    let base = if label == IGNORE {
        VOID
    } else {
        PALETTE[usize::from(label) % PALETTE.len()]
    };
    match highlight {
        Some(h) if h != label => base.map(|c| ((u16::from(c) + 2 * 160) / 3) as u8),
        _ => base,
    }
}

pub fn render_bmp(lm: &LabelMap, highlight: Option<u8>) -> Vec<u8> {
    let (w, h) = (lm.width(), lm.height());
    let row = (3 * w).div_ceil(4) * 4;
    let data_len = row * h;
    let mut out = Vec::with_capacity(54 + data_len);
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&((54 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&54u32.to_le_bytes());
    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    // negative height: rows stored top-down
    out.extend_from_slice(&(-(h as i32)).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = color(lm.get(y, x), highlight);
            out.extend_from_slice(&[b, g, r]);
        }
        out.resize(out.len() + row - 3 * w, 0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_padding() {
        let lm = LabelMap::new(2, 3, vec![0, 4, 255, 1, 2, 3]).unwrap();
        let bmp = render_bmp(&lm, Some(4));
        assert_eq!(&bmp[..2], b"BM");
        assert_eq!(bmp.len(), 54 + 2 * 12);
        // highlighted human pixel keeps its colour (BGR)
        assert_eq!(&bmp[57..60], &[60, 20, 220]);
    }
}
