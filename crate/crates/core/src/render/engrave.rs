//! Layout: height 160, 32 px margins, one 48 px cell per event. Staff
//! position `s` sits at `y = 80 + 5 * (4 - s)`, so the five lines are at
//! y = 100, 90, 80, 70, 60.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RenderError, StaffImage};
use crate::notation::{
    AccidentalContext, Accidental, Clef, Duration, Note, PitchToken, ScoreEvent, StaffPosition, StaffSymbol, Step,
    SymbolicScore, TimeSignature,
};

pub const HEIGHT: usize = 160;
pub const MARGIN: usize = 32;
pub const EVENT_WIDTH: usize = 48;

const HEAD_RX: f64 = 6.0;
const HEAD_RY: f64 = 4.5;
const STEM: f64 = 30.0;
/// Horizontal shift of the second notehead on a shared position.
const UNISON_SHIFT: f64 = 12.0;
const ACCIDENTAL_GAP: f64 = 14.0;

pub fn image_width(events: usize) -> usize {
    2 * MARGIN + EVENT_WIDTH * events
}

/// Horizontal center of event `i`.
pub fn event_center_x(i: usize) -> f64 {
    (MARGIN + EVENT_WIDTH * i + EVENT_WIDTH / 2) as f64
}

/// Vertical center of staff position `s` (before jitter).
pub fn staff_y(s: i32) -> f64 {
    80.0 + 5.0 * (4 - s) as f64
}

/// Optional imperfections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseOptions {
    /// Largest vertical shift of the staff, in pixels (at most 8).
    pub crop_jitter: u8,
    /// Draw stray partial symbols in the margins.
    pub edge_clutter: bool,
}

impl NoiseOptions {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn standard() -> Self {
        Self {
            crop_jitter: 8,
            edge_clutter: true,
        }
    }
}

struct Pen<'a> {
    img: &'a mut StaffImage,
    dy: f64,
}

impl Pen<'_> {
    fn y(&self, s: i32) -> f64 {
        staff_y(s) + self.dy
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), w: f64) {
        self.img.line((a.0, a.1 + self.dy), (b.0, b.1 + self.dy), w);
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.img.rect(x0, y0 + self.dy, x1, y1 + self.dy);
    }

    fn ellipse(&mut self, c: (f64, f64), rx: f64, ry: f64, filled: bool, t: f64) {
        self.img.ellipse((c.0, c.1 + self.dy), rx, ry, filled, t);
    }
}

/// Draws `score`. Deterministic in `(score, seed, noise)`; without noise the
/// seed has no effect.
pub fn render(score: &SymbolicScore, seed: u64, noise: &NoiseOptions) -> Result<StaffImage, RenderError> {
    score.validate()?;
    let width = image_width(score.len());
    let mut img = StaffImage::blank(width, HEIGHT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = noise.crop_jitter.min(8) as i64;
    let dy = if jitter > 0 { rng.gen_range(-jitter..=jitter) as f64 } else { 0.0 };
    let mut pen = Pen { img: &mut img, dy };

    for s in (0..=8).step_by(2) {
        let y = pen.y(s);
        pen.img.rect(0.0, y - 0.5, width as f64, y + 0.5);
    }

    let mut clef = Clef::G2;
    let mut ctx = AccidentalContext::new(0);
    for (i, event) in score.events.iter().enumerate() {
        let cx = event_center_x(i);
        match event {
            ScoreEvent::Staff(sym) => match *sym {
                StaffSymbol::Clef(c) => {
                    clef = c;
                    draw_clef(&mut pen, cx, c);
                }
                StaffSymbol::KeySignature(k) => {
                    ctx.set_key(k);
                    draw_key(&mut pen, cx, clef, k);
                }
                StaffSymbol::TimeSignature(t) => draw_time(&mut pen, cx, t),
                StaffSymbol::Barline => {
                    ctx.barline();
                    pen.img.rect(cx - 1.0, 0.0, cx + 1.0, HEIGHT as f64);
                }
            },
            ScoreEvent::Notes(notes) => draw_group(&mut pen, cx, &mut ctx, notes)?,
        }
    }

    if noise.edge_clutter {
        clutter(&mut img, &mut rng);
    }
    Ok(img)
}

fn draw_group(pen: &mut Pen, cx: f64, ctx: &mut AccidentalContext, notes: &[Note]) -> Result<(), RenderError> {
    let mut rest_slot = 0;
    let mut previous: Option<StaffPosition> = None;
    for n in notes {
        let Some(pos) = n.position else {
            draw_rest(pen, cx, 80.0 - 14.0 * rest_slot as f64, n.rhythm.duration);
            rest_slot += 1;
            continue;
        };
        let x = if previous == Some(pos) { cx + UNISON_SHIFT } else { cx };
        previous = Some(pos);
        let s = pos.value();
        let y = pen.y(s) - pen.dy;
        let d = n.rhythm.duration;
        pen.ellipse((x, y), HEAD_RX, HEAD_RY, d >= Duration::Quarter, 1.6);
        let mut ledger = |e: i32| pen.line((x - 9.0, staff_y(e)), (x + 9.0, staff_y(e)), 1.0);
        for e in (s..=-2).filter(|e| e % 2 == 0) {
            ledger(e);
        }
        for e in (10..=s).filter(|e| e % 2 == 0) {
            ledger(e);
        }
        if d != Duration::Whole {
            let up = s < 4;
            let sx = if up { x + HEAD_RX - 0.5 } else { x - HEAD_RX + 0.5 };
            let end = if up { y - STEM } else { y + STEM };
            pen.line((sx, y), (sx, end), 1.5);
            for k in 0..d.flag_count() {
                let k = k as f64 * 5.0;
                if up {
                    pen.line((sx, end + k), (sx + 7.0, end + k + 8.0), 2.0);
                } else {
                    pen.line((sx, end - k), (sx + 7.0, end - k - 8.0), 2.0);
                }
            }
        }
        let dot_y = if s % 2 == 0 { y - 2.5 } else { y };
        for k in 0..n.rhythm.dots {
            pen.ellipse((x + 10.0 + 5.0 * k as f64, dot_y), 1.6, 1.6, true, 0.0);
        }
        if let PitchToken::Note { .. } = n.pitch {
            let glyph = ctx.glyph_for(&n.pitch)?;
            draw_accidental(pen, x - ACCIDENTAL_GAP, y, glyph);
        }
    }
    Ok(())
}

fn draw_rest(pen: &mut Pen, cx: f64, yc: f64, d: Duration) {
    match d {
        Duration::Whole => pen.rect(cx - 6.0, yc, cx + 6.0, yc + 5.0),
        Duration::Half => pen.rect(cx - 6.0, yc - 5.0, cx + 6.0, yc),
        Duration::Quarter => {
            let pts = [(cx - 3.0, yc - 10.0), (cx + 3.0, yc - 4.0), (cx - 3.0, yc + 2.0), (cx + 3.0, yc + 8.0)];
            for w in pts.windows(2) {
                pen.line(w[0], w[1], 2.0);
            }
        }
        _ => {
            pen.line((cx + 4.0, yc - 8.0), (cx - 2.0, yc + 10.0), 1.5);
            for k in 0..d.flag_count() {
                let y = yc - 8.0 + 5.0 * k as f64;
                pen.ellipse((cx - 2.0, y), 2.2, 2.2, true, 0.0);
                pen.line((cx - 2.0, y), (cx + 4.0 - 1.6 * k as f64, y), 1.2);
            }
        }
    }
}

fn draw_accidental(pen: &mut Pen, ax: f64, y: f64, glyph: Accidental) {
    match glyph {
        Accidental::None => {}
        Accidental::Sharp => {
            pen.line((ax - 2.0, y - 8.0), (ax - 2.0, y + 8.0), 1.2);
            pen.line((ax + 2.0, y - 8.0), (ax + 2.0, y + 8.0), 1.2);
            pen.line((ax - 5.0, y - 2.0), (ax + 5.0, y - 4.0), 2.0);
            pen.line((ax - 5.0, y + 4.0), (ax + 5.0, y + 2.0), 2.0);
        }
        Accidental::Flat => flat(pen, ax, y),
        Accidental::Natural => {
            pen.line((ax - 3.0, y - 9.0), (ax - 3.0, y + 4.0), 1.2);
            pen.line((ax + 3.0, y - 4.0), (ax + 3.0, y + 9.0), 1.2);
            pen.line((ax - 3.0, y - 3.0), (ax + 3.0, y - 4.0), 2.0);
            pen.line((ax - 3.0, y + 3.0), (ax + 3.0, y + 2.0), 2.0);
        }
        Accidental::DoubleSharp => {
            pen.line((ax - 4.0, y - 4.0), (ax + 4.0, y + 4.0), 2.5);
            pen.line((ax - 4.0, y + 4.0), (ax + 4.0, y - 4.0), 2.5);
        }
        Accidental::DoubleFlat => {
            flat(pen, ax - 4.0, y);
            flat(pen, ax + 3.0, y);
        }
    }
}

fn flat(pen: &mut Pen, ax: f64, y: f64) {
    pen.line((ax - 3.0, y - 12.0), (ax - 3.0, y + 4.0), 1.2);
    pen.ellipse((ax, y + 1.0), 3.0, 3.0, false, 1.3);
}

fn draw_clef(pen: &mut Pen, cx: f64, clef: Clef) {
    match clef {
        Clef::G2 => {
            pen.line((cx, 50.0), (cx, 112.0), 2.0);
            pen.ellipse((cx, staff_y(2)), 7.0, 9.0, false, 1.8);
            pen.ellipse((cx - 3.0, 112.0), 2.5, 2.5, true, 0.0);
        }
        Clef::F4 => {
            let y = staff_y(6);
            pen.ellipse((cx - 6.0, y), 4.0, 4.0, true, 0.0);
            pen.line((cx - 6.0, y - 4.0), (cx + 6.0, y + 2.0), 2.0);
            pen.line((cx + 6.0, y + 2.0), (cx - 4.0, y + 26.0), 2.0);
            pen.ellipse((cx + 10.0, y - 5.0), 1.8, 1.8, true, 0.0);
            pen.ellipse((cx + 10.0, y + 5.0), 1.8, 1.8, true, 0.0);
        }
        Clef::C3 | Clef::C4 => {
            let centre = if clef == Clef::C3 { staff_y(4) } else { staff_y(6) };
            pen.rect(cx - 10.0, staff_y(8), cx - 6.0, staff_y(0) + 1.0);
            pen.rect(cx - 3.0, staff_y(8), cx - 1.0, staff_y(0) + 1.0);
            pen.line((cx, centre), (cx + 8.0, centre - 10.0), 2.0);
            pen.line((cx, centre), (cx + 8.0, centre + 10.0), 2.0);
        }
    }
}

/// Staff position of the `step` glyph in a key signature: the lowest one at
/// or above `floor`.
fn key_position(clef: Clef, step: Step, floor: i32) -> i32 {
    (floor..floor + 7)
        .find(|s| Step::from_index(clef.bottom_line() + s) == step)
        .expect("seven consecutive positions cover every step")
}

fn draw_key(pen: &mut Pen, cx: f64, clef: Clef, key: i8) {
    const SHARPS: [Step; 7] = [Step::F, Step::C, Step::G, Step::D, Step::A, Step::E, Step::B];
    const FLATS: [Step; 7] = [Step::B, Step::E, Step::A, Step::D, Step::G, Step::C, Step::F];
    let n = key.unsigned_abs() as usize;
    for j in 0..n {
        let ax = cx - 18.0 + 6.0 * j as f64;
        if key > 0 {
            let s = key_position(clef, SHARPS[j], 3);
            draw_accidental(pen, ax, staff_y(s), Accidental::Sharp);
        } else {
            let s = key_position(clef, FLATS[j], 2);
            draw_accidental(pen, ax, staff_y(s), Accidental::Flat);
        }
    }
}

/// 3x5 bitmaps, one row per entry, most significant bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b011, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_number(pen: &mut Pen, cx: f64, top: f64, n: u8) {
    let digits: Vec<usize> = n.to_string().bytes().map(|b| (b - b'0') as usize).collect();
    let scale = 4.0;
    let total = digits.len() as f64 * 3.0 * scale + (digits.len() - 1) as f64 * 2.0;
    let mut x0 = cx - total / 2.0;
    for d in digits {
        for (row, bits) in DIGITS[d].iter().enumerate() {
            for col in 0..3 {
                if bits >> (2 - col) & 1 == 1 {
                    let x = x0 + col as f64 * scale;
                    let y = top + row as f64 * scale;
                    pen.rect(x, y, x + scale, y + scale);
                }
            }
        }
        x0 += 3.0 * scale + 2.0;
    }
}

fn draw_time(pen: &mut Pen, cx: f64, t: TimeSignature) {
    draw_number(pen, cx, staff_y(8), t.beats());
    draw_number(pen, cx, staff_y(4), t.beat_type());
}

/// Partial symbols cut off by the image edges.
fn clutter(img: &mut StaffImage, rng: &mut ChaCha8Rng) {
    let w = img.width() as f64;
    for _ in 0..rng.gen_range(1..=3) {
        let left = rng.gen_bool(0.5);
        let x = if left { rng.gen_range(-6.0..10.0) } else { w - rng.gen_range(-6.0..10.0) };
        let y = rng.gen_range(40.0..120.0);
        match rng.gen_range(0..3) {
            0 => img.ellipse((x, y), HEAD_RX, HEAD_RY, true, 0.0),
            1 => img.line((x, y), (x, y + rng.gen_range(-35.0..35.0)), 1.5),
            _ => img.line((x - 4.0, y), (x + 4.0, y + rng.gen_range(-6.0..6.0)), 2.0),
        }
    }
}
