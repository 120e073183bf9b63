//! Counter-based random numbers.
//!
//! Every random quantity in the crate is a pure function of
//! `(key, site, lane, stream, block)` evaluated through Philox4x32-10, so a
//! weight field never has to be stored to be replayed: asking for the same
//! site twice returns the same value, from any thread, in any order.

use rand::RngCore;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 block function with 10 rounds.
#[inline]
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer, used only to derive replica keys from a seed.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a 64-bit word to a double in the open interval (0, 1).
#[inline]
pub fn open01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// What kind of lattice object a site id names. Vertices and the two edge
/// orientations share coordinates, so the lane keeps their streams apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Lane {
    Vertex = 0,
    HorizontalEdge = 1,
    VerticalEdge = 2,
    Scratch = 3,
}

/// Zigzag-packs two signed lattice coordinates into one site id.
#[inline]
pub fn pack_site(x: i32, y: i32) -> u64 {
    let zz = |v: i32| ((v << 1) ^ (v >> 31)) as u32;
    (u64::from(zz(x)) << 32) | u64::from(zz(y))
}

/// A generator key: one per (global seed, replica).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(pub u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(seed)
    }

    /// Key for replica `index` of an experiment seeded with `self`.
    /// `salt` separates experiments that share a seed (e.g. distinct n).
    pub fn replica(self, salt: u64, index: u64) -> Self {
        StreamKey(splitmix64(
            self.0 ^ splitmix64(salt.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ splitmix64(index)),
        ))
    }

    #[inline]
    fn words(self) -> [u32; 2] {
        [self.0 as u32, (self.0 >> 32) as u32]
    }

    /// First 64-bit output of block 0 for `(site, lane, stream)`.
    #[inline]
    pub fn bits(self, site: u64, lane: Lane, stream: u16) -> u64 {
        let out = philox4x32_10(
            [
                site as u32,
                (site >> 32) as u32,
                (u32::from(lane as u16) << 16) | u32::from(stream),
                0,
            ],
            self.words(),
        );
        (u64::from(out[1]) << 32) | u64::from(out[0])
    }

    /// A uniform on (0, 1) for `(site, lane, stream)`.
    #[inline]
    pub fn uniform(self, site: u64, lane: Lane, stream: u16) -> f64 {
        open01(self.bits(site, lane, stream))
    }

    /// A full sequential generator positioned at block 0 of `(site, lane, stream)`.
    pub fn stream(self, site: u64, lane: Lane, stream: u16) -> CounterRng {
        CounterRng {
            key: self.words(),
            site,
            lane_stream: (u32::from(lane as u16) << 16) | u32::from(stream),
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }
}

/// Sequential view of one counter stream. Implements [`RngCore`] so the
/// `rand_distr` samplers can draw from it.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    site: u64,
    lane_stream: u32,
    block: u32,
    buf: [u32; 4],
    pos: usize,
}

impl CounterRng {
    fn refill(&mut self) {
        self.buf = philox4x32_10(
            [
                self.site as u32,
                (self.site >> 32) as u32,
                self.lane_stream,
                self.block,
            ],
            self.key,
        );
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }

    /// Uniform on (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        open01(self.next_u64())
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        if self.pos >= 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
