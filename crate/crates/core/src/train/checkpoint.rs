//! Binary checkpoint format (little endian):
//!
//! ```text
//! magic        8 bytes  "TRISOUP\0"
//! version      u32      1
//! scalar_bytes u32      4 (f32) or 8 (f64)
//! count        u64      triangles
//! sh_degree    u32
//! active_sh    u32
//! flags        u32      bit 0: training state follows
//! params       6 groups (mu, sh, scale, rotation, opacity, sigma), each
//!              count * width scalars; widths 3, 9*(L+1)^2, 3, 4, 1, 1
//! -- when flag bit 0 is set --
//! iteration    u64
//! adam_step    u64
//! split_radius f64
//! adam_m       6 groups as above
//! adam_v       6 groups as above
//! stats        u64 iterations, count scalars max, 3*count scalars argmax grad
//! graph        u64 stamp, u64 triangle_count, u8 stale, u64 n, then n
//!              connections: for a and b {u32 tri, u8 edge, 9 scalars
//!              midpoint/outward/direction}, u8 reversed
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::connectivity::{Connection, EdgeGraph, EdgeRef};
use crate::density::DensifyStats;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scene::{ParamBuffers, TriangleSoup};
use crate::train::TrainState;

pub const MAGIC: &[u8; 8] = b"TRISOUP\0";
pub const VERSION: u32 = 1;

/// A decoded checkpoint: the full training state, or only a soup.
pub type Loaded<T> = (Option<TrainState<T>>, Option<TriangleSoup<T>>);

struct Writer<W: Write> {
    w: W,
    scalar_bytes: usize,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.w.write_all(b)?)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn scalar<T: Real>(&mut self, v: T) -> Result<()> {
        if self.scalar_bytes == 4 {
            self.bytes(&(v.as_f64() as f32).to_le_bytes())
        } else {
            self.f64(v.as_f64())
        }
    }
    fn scalars<T: Real>(&mut self, v: &[T]) -> Result<()> {
        v.iter().try_for_each(|x| self.scalar(*x))
    }
    fn vec3<T: Real>(&mut self, v: &Vector3<T>) -> Result<()> {
        self.scalars(v.as_slice())
    }
    fn buffers<T: Real>(&mut self, b: &ParamBuffers<T>) -> Result<()> {
        b.groups.iter().try_for_each(|g| self.scalars(g))
    }
    fn edge<T: Real>(&mut self, e: &EdgeRef<T>) -> Result<()> {
        self.u32(e.tri)?;
        self.u8(e.edge)?;
        self.vec3(&e.midpoint)?;
        self.vec3(&e.outward)?;
        self.vec3(&e.direction)
    }
}

struct Reader<R: Read> {
    r: R,
    scalar_bytes: usize,
}

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn scalar<T: Real>(&mut self) -> Result<T> {
        let v = if self.scalar_bytes == 4 { f32::from_le_bytes(self.array()?) as f64 } else { self.f64()? };
        Ok(T::lit(v))
    }
    fn scalars<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        (0..n).map(|_| self.scalar()).collect()
    }
    fn vec3<T: Real>(&mut self) -> Result<Vector3<T>> {
        Ok(Vector3::new(self.scalar()?, self.scalar()?, self.scalar()?))
    }
    fn buffers<T: Real>(&mut self, count: usize, widths: &[usize; 6]) -> Result<ParamBuffers<T>> {
        let mut groups: [Vec<T>; 6] = Default::default();
        for (g, w) in groups.iter_mut().zip(widths) {
            *g = self.scalars(count * w)?;
        }
        Ok(ParamBuffers { groups })
    }
    fn edge<T: Real>(&mut self) -> Result<EdgeRef<T>> {
        let tri = self.u32()?;
        let edge = self.u8()?;
        if edge > 2 {
            return Err(Error::Checkpoint(format!("edge index {edge} out of range")));
        }
        Ok(EdgeRef { tri, edge, midpoint: self.vec3()?, outward: self.vec3()?, direction: self.vec3()? })
    }
}

fn write_header<W: Write, T: Real>(w: &mut Writer<W>, soup: &TriangleSoup<T>, flags: u32) -> Result<()> {
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(T::BYTES as u32)?;
    w.u64(soup.count() as u64)?;
    w.u32(soup.sh_degree as u32)?;
    w.u32(soup.active_sh as u32)?;
    w.u32(flags)?;
    w.buffers(&soup.params)
}

/// Serializes a full training state.
pub fn write_state<T: Real>(state: &TrainState<T>, out: impl Write) -> Result<()> {
    let mut w = Writer { w: out, scalar_bytes: T::BYTES };
    write_header(&mut w, &state.soup, 1)?;
    w.u64(state.iteration)?;
    w.u64(state.adam_step)?;
    w.f64(state.split_radius)?;
    w.buffers(&state.soup.adam_m)?;
    w.buffers(&state.soup.adam_v)?;
    w.u64(state.stats.iterations)?;
    w.scalars(&state.stats.max_grad)?;
    for g in &state.stats.grad_at_max {
        w.vec3(g)?;
    }
    let g = &state.graph;
    w.u64(g.stamp)?;
    w.u64(g.triangle_count as u64)?;
    w.u8(g.stale as u8)?;
    w.u64(g.connections.len() as u64)?;
    for c in &g.connections {
        w.edge(&c.a)?;
        w.edge(&c.b)?;
        w.u8(c.reversed as u8)?;
    }
    Ok(w.w.flush()?)
}

/// Serializes only the soup parameters.
pub fn write_soup<T: Real>(soup: &TriangleSoup<T>, out: impl Write) -> Result<()> {
    let mut w = Writer { w: out, scalar_bytes: T::BYTES };
    write_header(&mut w, soup, 0)?;
    Ok(w.w.flush()?)
}

/// Reads a checkpoint. Returns the soup and, if present, the rest of the
/// training state (with the soup moved inside it).
pub fn read<T: Real>(input: impl Read) -> Result<Loaded<T>> {
    let mut r = Reader { r: input, scalar_bytes: 8 };
    if &r.array::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.scalar_bytes = match r.u32()? {
        4 => 4,
        8 => 8,
        b => return Err(Error::Checkpoint(format!("unsupported scalar width {b}"))),
    };
    let count = r.u64()? as usize;
    let sh_degree = r.u32()? as usize;
    let active_sh = r.u32()? as usize;
    if sh_degree > crate::geometry::sh::MAX_SH_DEGREE || active_sh > sh_degree {
        return Err(Error::Checkpoint(format!("bad SH degrees {active_sh}/{sh_degree}")));
    }
    let flags = r.u32()?;
    let widths = TriangleSoup::<T>::widths_for(sh_degree);
    let mut soup = TriangleSoup::new(sh_degree);
    soup.active_sh = active_sh;
    soup.params = r.buffers(count, &widths)?;
    soup.grads = ParamBuffers::zeros(count, &widths);
    soup.adam_m = ParamBuffers::zeros(count, &widths);
    soup.adam_v = ParamBuffers::zeros(count, &widths);
    if flags & 1 == 0 {
        return Ok((None, Some(soup)));
    }
    let iteration = r.u64()?;
    let adam_step = r.u64()?;
    let split_radius = r.f64()?;
    soup.adam_m = r.buffers(count, &widths)?;
    soup.adam_v = r.buffers(count, &widths)?;
    let mut stats = DensifyStats::new(count);
    stats.iterations = r.u64()?;
    stats.max_grad = r.scalars(count)?;
    for g in &mut stats.grad_at_max {
        *g = r.vec3()?;
    }
    let stamp = r.u64()?;
    let triangle_count = r.u64()? as usize;
    let stale = r.u8()? != 0;
    let n = r.u64()? as usize;
    let mut connections = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let a = r.edge()?;
        let b = r.edge()?;
        let reversed = r.u8()? != 0;
        connections.push(Connection { a, b, reversed });
    }
    let mut rest = Vec::new();
    r.r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let graph = EdgeGraph { connections, stamp, triangle_count, stale };
    Ok((Some(TrainState { iteration, adam_step, split_radius, soup, stats, graph, history: Vec::new() }), None))
}

pub fn save_state<T: Real>(state: &TrainState<T>, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_state(state, f)
}

pub fn save_soup<T: Real>(soup: &TriangleSoup<T>, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_soup(soup, f)
}

/// Loads the soup from either kind of checkpoint.
pub fn load_soup<T: Real>(path: &Path) -> Result<TriangleSoup<T>> {
    match load(path)? {
        (Some(state), _) => Ok(state.soup),
        (None, Some(soup)) => Ok(soup),
        _ => unreachable!("reader returns one of the two"),
    }
}

pub fn load<T: Real>(path: &Path) -> Result<Loaded<T>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    read(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::build_graph;
    use crate::scene::ParamGroup;
    use crate::synthetic::SceneSpec;
    use crate::train::{TrainConfig, Trainer};

    fn small_spec() -> SceneSpec {
        SceneSpec { width: 16, height: 16, focal: 16.0, views: 4, held_out: 0, seed_points: 60, ..SceneSpec::quad() }
    }

    fn trained_state(iterations: u64) -> TrainState<f64> {
        let scene = small_spec().generate::<f64>();
        let cfg = TrainConfig { iterations, ..Default::default() };
        let mut tr = Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap();
        tr.run(|_, _| Ok(())).unwrap();
        let mut st = tr.state;
        st.graph = build_graph(&st.soup, &cfg.graph_params(), st.iteration);
        st
    }

    fn bytes_of(state: &TrainState<f64>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_state(state, &mut buf).unwrap();
        buf
    }

    #[test]
    fn state_round_trips_exactly() {
        let st = trained_state(20);
        assert!(!st.graph.connections.is_empty());
        let buf = bytes_of(&st);
        let (back, soup) = read::<f64>(buf.as_slice()).unwrap();
        assert!(soup.is_none());
        let back = back.unwrap();
        let mut expected = st.clone();
        expected.history.clear();
        expected.soup.grads = back.soup.grads.clone();
        assert_eq!(back, expected);
        assert_eq!(bytes_of(&back), buf);
    }

    #[test]
    fn soup_only_checkpoint_has_no_state() {
        let st = trained_state(5);
        let mut buf = Vec::new();
        write_soup(&st.soup, &mut buf).unwrap();
        let (state, soup) = read::<f64>(buf.as_slice()).unwrap();
        assert!(state.is_none());
        assert_eq!(soup.unwrap().params, st.soup.params);
    }

    #[test]
    fn f32_checkpoint_widens_to_f64() {
        let scene = small_spec().generate::<f32>();
        let st = TrainState::<f32>::initialize(&scene.dataset, &TrainConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_soup(&st.soup, &mut buf).unwrap();
        let soup = read::<f64>(buf.as_slice()).unwrap().1.unwrap();
        for (a, b) in soup.params.get(ParamGroup::Mu).iter().zip(st.soup.params.get(ParamGroup::Mu)) {
            assert_eq!(*a, *b as f64);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let buf = bytes_of(&trained_state(2));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read::<f64>(bad.as_slice()), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read::<f64>(bad.as_slice()), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(read::<f64>(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read::<f64>(long.as_slice()), Err(Error::Checkpoint(m)) if m.contains("trailing")));
    }

    #[test]
    fn missing_file_is_named() {
        let p = Path::new("/nonexistent/dir/ckpt.bin");
        assert!(matches!(load::<f64>(p), Err(Error::Missing(q)) if q == p));
    }
}
