//! Out-of-core style 3D FFT over a paged distributed array.
//!
//! The array is a grid of `N1 x N2 x N3` pages, each an `n1 x n2 x n3`
//! block of complex numbers stored on a device agent. The dimension-1
//! transform is computed by slab workers: each takes a range of dimension-2
//! page indices and processes page lines `(*, i2, i3)` one at a time,
//! reading the next line while the current one is transformed. The other
//! two dimensions reuse the same machinery after every page is transposed
//! in place (`transpose12` / `transpose13`) and the page grid is permuted
//! accordingly, which moves no data between agents.

use crate::api::{Ctx, Future, Params, RemoteError};
use crate::runtime::{AppError, KindDescriptor, KindRegistry, RegistryError};
use crate::wire::{AgentId, KindId, MethodId, RemoteRef};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub const ARRAY_PAGE_KIND: KindId = KindId(0x0300);
pub const PAGE_TRANSPOSE12: MethodId = MethodId(1);
pub const PAGE_TRANSPOSE13: MethodId = MethodId(2);
pub const PAGE_DIMS: MethodId = MethodId(3);

pub const SLAB_FFT_KIND: KindId = KindId(0x0301);
pub const SLAB_COMPUTE_TRANSFORM: MethodId = MethodId(1);

/// Bytes per complex element in block transfers.
pub const ELEM_BYTES: u64 = 16;

/// Extents of a 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl Domain3 {
    pub fn new(n1: usize, n2: usize, n3: usize) -> Result<Domain3, String> {
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(format!("domain extents must be positive, got {n1}x{n2}x{n3}"));
        }
        Ok(Domain3 { n1, n2, n3 })
    }

    pub fn cube(n: usize) -> Result<Domain3, String> {
        Domain3::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n2 + j) * self.n3 + k
    }

    pub fn swap12(self) -> Domain3 {
        Domain3 { n1: self.n2, n2: self.n1, n3: self.n3 }
    }

    pub fn swap13(self) -> Domain3 {
        Domain3 { n1: self.n3, n2: self.n2, n3: self.n1 }
    }
}

impl fmt::Display for Domain3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n1, self.n2, self.n3)
    }
}

/// A small dense 3D array, row-major with dimension 3 fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayPage {
    dims: Domain3,
    values: Vec<Complex64>,
}

impl ArrayPage {
    pub fn zeros(dims: Domain3) -> ArrayPage {
        ArrayPage { dims, values: vec![Complex64::new(0.0, 0.0); dims.len()] }
    }

    pub fn from_values(dims: Domain3, values: Vec<Complex64>) -> Result<ArrayPage, String> {
        if values.len() != dims.len() {
            return Err(format!("{} values for a {dims} page", values.len()));
        }
        Ok(ArrayPage { dims, values })
    }

    pub fn dims(&self) -> Domain3 {
        self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.values[self.dims.index(i, j, k)]
    }

    /// `(i, j, k) -> (j, i, k)`
    pub fn transpose12(&mut self) {
        let d = self.dims;
        let nd = d.swap12();
        let mut out = vec![Complex64::new(0.0, 0.0); d.len()];
        for i in 0..d.n1 {
            for j in 0..d.n2 {
                for k in 0..d.n3 {
                    out[nd.index(j, i, k)] = self.values[d.index(i, j, k)];
                }
            }
        }
        self.dims = nd;
        self.values = out;
    }

    /// `(i, j, k) -> (k, j, i)`
    pub fn transpose13(&mut self) {
        let d = self.dims;
        let nd = d.swap13();
        let mut out = vec![Complex64::new(0.0, 0.0); d.len()];
        for i in 0..d.n1 {
            for j in 0..d.n2 {
                for k in 0..d.n3 {
                    out[nd.index(k, j, i)] = self.values[d.index(i, j, k)];
                }
            }
        }
        self.dims = nd;
        self.values = out;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        complex_to_bytes(&self.values)
    }
}

pub fn complex_to_bytes(values: &[Complex64]) -> Vec<u8> {
    values.iter().flat_map(|c| c.re.to_le_bytes().into_iter().chain(c.im.to_le_bytes())).collect()
}

pub fn complex_from_bytes(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect()
}

fn elem_range(len: usize, offset: u64, bytes: u64) -> Result<(usize, usize), AppError> {
    let total = len as u64 * ELEM_BYTES;
    if !offset.is_multiple_of(ELEM_BYTES) || !bytes.is_multiple_of(ELEM_BYTES) {
        return Err(AppError::out_of_range(format!("unaligned page access at {offset}+{bytes}")));
    }
    match offset.checked_add(bytes) {
        Some(end) if end <= total => Ok(((offset / ELEM_BYTES) as usize, (end / ELEM_BYTES) as usize)),
        _ => Err(AppError::out_of_range(format!("bytes {offset}+{bytes} outside page of {total} bytes"))),
    }
}

/// Which agent transposes pages while a line is read or written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReadVariant {
    /// The device storing the page transposes it before the copy.
    #[default]
    TransposeAtDevice,
    /// The reader copies the page and transposes it locally.
    TransposeAtReader,
}

impl FromStr for ReadVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "device" => Ok(ReadVariant::TransposeAtDevice),
            "reader" => Ok(ReadVariant::TransposeAtReader),
            other => Err(format!("unknown read variant {other:?} (expected device or reader)")),
        }
    }
}

impl fmt::Display for ReadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReadVariant::TransposeAtDevice => "device",
            ReadVariant::TransposeAtReader => "reader",
        })
    }
}

/// Handle to a paged array. Small and freely copied to every worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistArray {
    /// Pages per dimension.
    pub array_domain: Domain3,
    /// Elements per page.
    pub page_domain: Domain3,
    /// Page references, indexed like `array_domain`.
    pub pages: Vec<RemoteRef>,
}

/// Device index of page `(j1, j2, j3)` under circulant placement.
pub fn circulant_device(j1: usize, j2: usize, j3: usize, devices: usize) -> usize {
    (j1 + j2 + j3) % devices
}

/// Pages each device receives under circulant placement.
pub fn page_counts(array_domain: Domain3, devices: usize) -> Vec<usize> {
    let mut counts = vec![0; devices];
    for j1 in 0..array_domain.n1 {
        for j2 in 0..array_domain.n2 {
            for j3 in 0..array_domain.n3 {
                counts[circulant_device(j1, j2, j3, devices)] += 1;
            }
        }
    }
    counts
}

/// Constructs every page, zero-initialised, on `devices` in circulant order.
pub fn array_allocate(
    ctx: &Ctx,
    array_domain: Domain3,
    page_domain: Domain3,
    devices: &[AgentId],
) -> Result<DistArray, RemoteError> {
    if devices.is_empty() {
        return Err(RemoteError::Usage("array allocation needs at least one device".into()));
    }
    let futures = ctx.barrier(|c| {
        let mut out = Vec::with_capacity(array_domain.len());
        for j1 in 0..array_domain.n1 {
            for j2 in 0..array_domain.n2 {
                for j3 in 0..array_domain.n3 {
                    let d = devices[circulant_device(j1, j2, j3, devices.len())];
                    out.push(c.construct(d, ARRAY_PAGE_KIND, Params::new().arg(&page_domain)));
                }
            }
        }
        out
    })?;
    let pages = futures.iter().map(Future::get).collect::<Result<_, _>>()?;
    Ok(DistArray { array_domain, page_domain, pages })
}

impl DistArray {
    pub fn page(&self, j1: usize, j2: usize, j3: usize) -> RemoteRef {
        self.pages[self.array_domain.index(j1, j2, j3)]
    }

    /// Global extents in elements.
    pub fn global(&self) -> Domain3 {
        let (a, p) = (self.array_domain, self.page_domain);
        Domain3 { n1: a.n1 * p.n1, n2: a.n2 * p.n2, n3: a.n3 * p.n3 }
    }

    /// The pages `(*, i2, i3)`.
    pub fn line(&self, i2: usize, i3: usize) -> Vec<RemoteRef> {
        (0..self.array_domain.n1).map(|i1| self.page(i1, i2, i3)).collect()
    }

    fn for_each_page(&self, mut f: impl FnMut(usize, usize, usize, RemoteRef)) {
        let a = self.array_domain;
        for j1 in 0..a.n1 {
            for j2 in 0..a.n2 {
                for j3 in 0..a.n3 {
                    f(j1, j2, j3, self.page(j1, j2, j3));
                }
            }
        }
    }

    /// Writes a global row-major array into the pages.
    pub fn scatter(&self, ctx: &Ctx, data: &[Complex64]) -> Result<(), RemoteError> {
        let g = self.global();
        if data.len() != g.len() {
            return Err(RemoteError::Usage(format!("{} values for a {g} array", data.len())));
        }
        let p = self.page_domain;
        ctx.barrier(|c| {
            self.for_each_page(|j1, j2, j3, page| {
                let mut block = Vec::with_capacity(p.len());
                for i1 in 0..p.n1 {
                    for i2 in 0..p.n2 {
                        for i3 in 0..p.n3 {
                            block.push(data[g.index(j1 * p.n1 + i1, j2 * p.n2 + i2, j3 * p.n3 + i3)]);
                        }
                    }
                }
                c.remote_write(page, 0, complex_to_bytes(&block));
            })
        })
    }

    /// Reads the pages back into a global row-major array.
    pub fn gather(&self, ctx: &Ctx) -> Result<Vec<Complex64>, RemoteError> {
        let (g, p) = (self.global(), self.page_domain);
        let bytes = p.len() as u64 * ELEM_BYTES;
        let reads = ctx.barrier(|c| {
            let mut out = Vec::new();
            self.for_each_page(|j1, j2, j3, page| out.push(((j1, j2, j3), c.remote_read(page, 0, bytes))));
            out
        })?;
        let mut data = vec![Complex64::new(0.0, 0.0); g.len()];
        for ((j1, j2, j3), f) in reads {
            let block = complex_from_bytes(&f.get()?);
            for i1 in 0..p.n1 {
                for i2 in 0..p.n2 {
                    for i3 in 0..p.n3 {
                        data[g.index(j1 * p.n1 + i1, j2 * p.n2 + i2, j3 * p.n3 + i3)] = block[p.index(i1, i2, i3)];
                    }
                }
            }
        }
        Ok(data)
    }

    /// Transposes every page with `transpose12` at its device and returns
    /// the handle of the array with dimensions 1 and 2 exchanged.
    pub fn swap12(&self, ctx: &Ctx) -> Result<DistArray, RemoteError> {
        self.repartition(ctx, PAGE_TRANSPOSE12, |j1, j2, j3| (j2, j1, j3), Domain3::swap12)
    }

    /// As [`DistArray::swap12`] for dimensions 1 and 3.
    pub fn swap13(&self, ctx: &Ctx) -> Result<DistArray, RemoteError> {
        self.repartition(ctx, PAGE_TRANSPOSE13, |j1, j2, j3| (j3, j2, j1), Domain3::swap13)
    }

    fn repartition(
        &self,
        ctx: &Ctx,
        method: MethodId,
        perm: impl Fn(usize, usize, usize) -> (usize, usize, usize),
        swap: impl Fn(Domain3) -> Domain3,
    ) -> Result<DistArray, RemoteError> {
        ctx.barrier(|c| {
            for &page in &self.pages {
                c.invoke::<()>(page, method, Params::new());
            }
        })?;
        let array_domain = swap(self.array_domain);
        let mut pages = self.pages.clone();
        self.for_each_page(|j1, j2, j3, page| {
            let (a, b, c) = perm(j1, j2, j3);
            pages[array_domain.index(a, b, c)] = page;
        });
        Ok(DistArray { array_domain, page_domain: swap(self.page_domain), pages })
    }
}

/// Reads a page line. Returned pages are transposed with `transpose13`, so
/// dimension 1 is contiguous within each page.
pub fn read_page_line(
    ctx: &Ctx,
    line: &[RemoteRef],
    page_domain: Domain3,
    variant: ReadVariant,
) -> Result<Vec<ArrayPage>, RemoteError> {
    let bytes = page_domain.len() as u64 * ELEM_BYTES;
    let read = |c: &Ctx| line.iter().map(|&p| c.remote_read(p, 0, bytes)).collect::<Vec<_>>();
    let decode = |reads: Vec<Future<Vec<u8>>>, dims: Domain3| -> Result<Vec<ArrayPage>, RemoteError> {
        reads
            .into_iter()
            .map(|f| ArrayPage::from_values(dims, complex_from_bytes(&f.get()?)).map_err(RemoteError::Usage))
            .collect()
    };
    match variant {
        ReadVariant::TransposeAtDevice => {
            ctx.barrier(|c| {
                for &p in line {
                    c.invoke::<()>(p, PAGE_TRANSPOSE13, Params::new());
                }
            })?;
            let reads = ctx.barrier(read)?;
            decode(reads, page_domain.swap13())
        }
        ReadVariant::TransposeAtReader => {
            let reads = ctx.barrier(read)?;
            let mut pages = decode(reads, page_domain)?;
            ctx.local("transpose13", || pages.iter_mut().for_each(ArrayPage::transpose13));
            Ok(pages)
        }
    }
}

/// Writes back a line produced by [`read_page_line`], restoring the stored
/// page layout.
pub fn write_page_line(
    ctx: &Ctx,
    line: &[RemoteRef],
    mut pages: Vec<ArrayPage>,
    variant: ReadVariant,
) -> Result<(), RemoteError> {
    if variant == ReadVariant::TransposeAtReader {
        ctx.local("transpose13", || pages.iter_mut().for_each(ArrayPage::transpose13));
    }
    ctx.barrier(|c| {
        for (&p, page) in line.iter().zip(&pages) {
            c.remote_write(p, 0, page.to_bytes());
        }
    })?;
    if variant == ReadVariant::TransposeAtDevice {
        ctx.barrier(|c| {
            for &p in line {
                c.invoke::<()>(p, PAGE_TRANSPOSE13, Params::new());
            }
        })?;
    }
    Ok(())
}

/// Forward unnormalised DFT in place.
pub fn fft_in_place(data: &mut [Complex64]) {
    if data.len() > 1 {
        FftPlanner::new().plan_fft_forward(data.len()).process(data);
    }
}

/// Transforms a line of `transpose13`-ed pages along the original
/// dimension 1: one 1D transform of length `N1 * n1` per element column.
pub fn fft_line(pages: &mut [ArrayPage]) {
    let Some(first) = pages.first() else { return };
    let d = first.dims;
    let (cols, seg) = (d.n1 * d.n2, d.n3);
    let len = seg * pages.len();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for col in 0..cols {
        for (p, page) in pages.iter().enumerate() {
            buf[p * seg..(p + 1) * seg].copy_from_slice(&page.values[col * seg..(col + 1) * seg]);
        }
        fft.process(&mut buf);
        for (p, page) in pages.iter_mut().enumerate() {
            page.values[col * seg..(col + 1) * seg].copy_from_slice(&buf[p * seg..(p + 1) * seg]);
        }
    }
}

/// Worker transforming the page lines whose dimension-2 index lies in
/// `n20..n21`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlabFft {
    pub array: DistArray,
    pub n20: usize,
    pub n21: usize,
    pub variant: ReadVariant,
}

impl SlabFft {
    fn lines(&self) -> Vec<(usize, usize)> {
        (self.n20..self.n21).flat_map(|i2| (0..self.array.array_domain.n3).map(move |i3| (i2, i3))).collect()
    }

    /// Pipelined transform: the read of line `k + 1` is in flight while
    /// line `k` is transformed; line `k` is written once both are done.
    pub fn compute_transform(&self, ctx: &Ctx) -> Result<(), RemoteError> {
        let lines = self.lines();
        let Some(&(f2, f3)) = lines.first() else { return Ok(()) };
        let dims = self.array.page_domain;
        let variant = self.variant;
        let mut current = read_page_line(ctx, &self.array.line(f2, f3), dims, variant)?;
        for (k, &(i2, i3)) in lines.iter().enumerate() {
            let next = ctx.barrier(|c| {
                let next = lines.get(k + 1).map(|&(l2, l3)| {
                    let refs = self.array.line(l2, l3);
                    let label = format!("read_line:{l2}:{l3}");
                    c.spawn(&label.clone(), move |cc| cc.local(&label, || read_page_line(cc, &refs, dims, variant)))
                });
                c.local(&format!("fft_line:{i2}:{i3}"), || fft_line(&mut current));
                next
            })?;
            let line = self.array.line(i2, i3);
            let page_line = std::mem::take(&mut current);
            ctx.local(&format!("write_line:{i2}:{i3}"), || write_page_line(ctx, &line, page_line, variant))?;
            if let Some(next) = next {
                current = next.get()?;
            }
        }
        Ok(())
    }
}

/// Dimension-2 page ranges of the slab workers.
pub fn slab_ranges(n2: usize, cpus: usize) -> Result<Vec<(usize, usize)>, String> {
    if cpus == 0 || !n2.is_multiple_of(cpus) {
        return Err(format!("{n2} pages along dimension 2 cannot be split into {cpus} equal slabs"));
    }
    let width = n2 / cpus;
    Ok((0..cpus).map(|i| (i * width, (i + 1) * width)).collect())
}

/// Dimension-1 transform of the whole array by one slab worker per cpu.
pub fn array_fft1(ctx: &Ctx, array: &DistArray, cpus: &[AgentId], variant: ReadVariant) -> Result<(), RemoteError> {
    let ranges = slab_ranges(array.array_domain.n2, cpus.len()).map_err(RemoteError::Usage)?;
    let slabs = ctx.barrier(|c| {
        ranges
            .iter()
            .zip(cpus)
            .map(|(&(n20, n21), &cpu)| {
                let slab = SlabFft { array: array.clone(), n20, n21, variant };
                c.construct(cpu, SLAB_FFT_KIND, Params::new().arg(&slab))
            })
            .collect::<Vec<_>>()
    })?;
    let slabs = slabs.iter().map(Future::get).collect::<Result<Vec<_>, _>>()?;
    let done = ctx.barrier(|c| {
        for s in &slabs {
            c.invoke::<()>(s, SLAB_COMPUTE_TRANSFORM, Params::new());
        }
    });
    ctx.barrier(|c| {
        for s in &slabs {
            c.destroy(s);
        }
    })?;
    done
}

/// Full 3D transform: dimension 1, then dimensions 2 and 3 after
/// repartitioning. The array ends in its original layout.
pub fn array_fft3(ctx: &Ctx, array: &DistArray, cpus: &[AgentId], variant: ReadVariant) -> Result<(), RemoteError> {
    let a = array.array_domain;
    if cpus.is_empty() || !a.n1.is_multiple_of(cpus.len()) || !a.n2.is_multiple_of(cpus.len()) {
        return Err(RemoteError::Usage(format!(
            "{} slab workers must divide the page counts {} and {}",
            cpus.len(),
            a.n1,
            a.n2
        )));
    }
    array_fft1(ctx, array, cpus, variant)?;
    let t = array.swap12(ctx)?;
    array_fft1(ctx, &t, cpus, variant)?;
    let back = t.swap12(ctx)?;
    let t = back.swap13(ctx)?;
    array_fft1(ctx, &t, cpus, variant)?;
    t.swap13(ctx)?;
    Ok(())
}

pub fn register(kinds: &mut KindRegistry) -> Result<(), RegistryError> {
    let page = KindDescriptor::builder(ARRAY_PAGE_KIND, "ArrayPage", |_, args| Ok(ArrayPage::zeros(args.get(0)?)))
        .method(PAGE_TRANSPOSE12, |p: &mut ArrayPage, _, _| {
            p.transpose12();
            Ok(())
        })
        .method(PAGE_TRANSPOSE13, |p: &mut ArrayPage, _, _| {
            p.transpose13();
            Ok(())
        })
        .shared_method(PAGE_DIMS, |p: &ArrayPage, _, _| Ok(p.dims))
        .block_access(
            |p: &ArrayPage, offset, len| {
                let (lo, hi) = elem_range(p.values.len(), offset, len)?;
                Ok(complex_to_bytes(&p.values[lo..hi]))
            },
            |p: &mut ArrayPage, offset, bytes| {
                let (lo, hi) = elem_range(p.values.len(), offset, bytes.len() as u64)?;
                p.values[lo..hi].copy_from_slice(&complex_from_bytes(bytes));
                Ok(())
            },
        )
        .build();
    kinds.register(page)?;
    let slab = KindDescriptor::builder(SLAB_FFT_KIND, "SlabFFT", |_, args| {
        let slab: SlabFft = args.get(0)?;
        if slab.n20 > slab.n21 || slab.n21 > slab.array.array_domain.n2 {
            return Err(AppError::out_of_range(format!("slab {}..{} outside the array", slab.n20, slab.n21)));
        }
        Ok(slab)
    })
    .shared_method(SLAB_COMPUTE_TRANSFORM, |s: &SlabFft, ctx, _| Ok(s.compute_transform(ctx)?))
    .build();
    kinds.register(slab)?;
    Ok(())
}

/// Direct `O(n²)` DFT.
pub fn dft_direct(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let twiddle: Vec<Complex64> = (0..n).map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64)).collect();
    (0..n)
        .map(|k| x.iter().enumerate().map(|(j, &v)| v * twiddle[(j * k) % n]).sum())
        .collect()
}

/// 3D DFT computed with direct 1D DFTs along each axis.
pub fn dft3_direct(data: &[Complex64], dims: Domain3) -> Vec<Complex64> {
    let mut out = data.to_vec();
    let mut axis = |len: usize, index: &dyn Fn(usize, usize, usize) -> usize, outer: (usize, usize)| {
        let mut col = vec![Complex64::new(0.0, 0.0); len];
        for a in 0..outer.0 {
            for b in 0..outer.1 {
                for (t, c) in col.iter_mut().enumerate() {
                    *c = out[index(a, b, t)];
                }
                for (t, v) in dft_direct(&col).into_iter().enumerate() {
                    out[index(a, b, t)] = v;
                }
            }
        }
    };
    axis(dims.n1, &|a, b, t| dims.index(t, a, b), (dims.n2, dims.n3));
    axis(dims.n2, &|a, b, t| dims.index(a, t, b), (dims.n1, dims.n3));
    axis(dims.n3, &|a, b, t| dims.index(a, b, t), (dims.n1, dims.n2));
    out
}

/// One output coefficient of the 3D DFT by the defining triple sum.
pub fn dft3_point(data: &[Complex64], dims: Domain3, k: (usize, usize, usize)) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..dims.n1 {
        for j in 0..dims.n2 {
            for l in 0..dims.n3 {
                let phase = ((i * k.0) % dims.n1) as f64 / dims.n1 as f64
                    + ((j * k.1) % dims.n2) as f64 / dims.n2 as f64
                    + ((l * k.2) % dims.n3) as f64 / dims.n3 as f64;
                sum += data[dims.index(i, j, l)] * Complex64::from_polar(1.0, -2.0 * PI * phase);
            }
        }
    }
    sum
}

/// Input pattern of the demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FftInput {
    Random,
    Zeros,
    /// Unit impulse at the origin.
    Delta,
}

impl FromStr for FftInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(FftInput::Random),
            "zeros" => Ok(FftInput::Zeros),
            "delta" => Ok(FftInput::Delta),
            other => Err(format!("unknown input {other:?} (expected random, zeros or delta)")),
        }
    }
}

pub fn make_input(input: FftInput, dims: Domain3, seed: u64) -> Vec<Complex64> {
    let mut data = vec![Complex64::new(0.0, 0.0); dims.len()];
    match input {
        FftInput::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            data.iter_mut().for_each(|c| *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        FftInput::Zeros => {}
        FftInput::Delta => data[0] = Complex64::new(1.0, 0.0),
    }
    data
}

#[derive(Debug, Clone)]
pub struct FftConfig {
    /// Pages per dimension.
    pub pages: usize,
    /// Elements per page dimension.
    pub page_size: usize,
    pub devices: usize,
    pub cpus: usize,
    pub variant: ReadVariant,
    pub input: FftInput,
    pub seed: u64,
}

impl Default for FftConfig {
    fn default() -> Self {
        FftConfig { pages: 4, page_size: 8, devices: 4, cpus: 4, variant: ReadVariant::TransposeAtDevice, input: FftInput::Random, seed: 0 }
    }
}

/// Accuracy of a computed transform against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub max_abs_error: f64,
    pub max_error_at: (usize, usize, usize),
    pub reference_rms: f64,
    /// `|sum|x|² * N - sum|X|²|` relative to `sum|X|²`.
    pub parseval_relative: f64,
}

impl Comparison {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_abs_error <= tolerance * self.reference_rms && self.parseval_relative <= tolerance
    }
}

pub fn compare(input: &[Complex64], output: &[Complex64], reference: &[Complex64], dims: Domain3) -> Comparison {
    let mut max_abs_error = 0.0;
    let mut at = 0;
    for (i, (a, b)) in output.iter().zip(reference).enumerate() {
        let e = (a - b).norm();
        if e > max_abs_error {
            max_abs_error = e;
            at = i;
        }
    }
    let energy_out: f64 = reference.iter().map(|c| c.norm_sqr()).sum();
    let energy_in: f64 = input.iter().map(|c| c.norm_sqr()).sum::<f64>() * dims.len() as f64;
    let energy_got: f64 = output.iter().map(|c| c.norm_sqr()).sum();
    let parseval_relative = if energy_out == 0.0 {
        energy_in.max(energy_got)
    } else {
        (energy_in - energy_got).abs() / energy_out
    };
    let k = (at / (dims.n2 * dims.n3), (at / dims.n3) % dims.n2, at % dims.n3);
    Comparison {
        max_abs_error,
        max_error_at: k,
        reference_rms: (energy_out / dims.len() as f64).sqrt(),
        parseval_relative,
    }
}

pub const FFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Fft3dReport {
    pub global: Domain3,
    pub array_domain: Domain3,
    pub page_domain: Domain3,
    pub device_agents: Vec<AgentId>,
    pub cpu_agents: Vec<AgentId>,
    pub comparison: Comparison,
    pub transform_time: Duration,
    pub passed: bool,
}

/// Creates device hosts, allocates and fills the array, creates cpu hosts
/// once allocation is complete, transforms all three dimensions and
/// checks the result against the direct DFT.
pub fn fft3d_demo(ctx: &Ctx, config: &FftConfig) -> Result<Fft3dReport, RemoteError> {
    let array_domain = Domain3::cube(config.pages).map_err(RemoteError::Usage)?;
    let page_domain = Domain3::cube(config.page_size).map_err(RemoteError::Usage)?;
    let hosts = |prefix: &str, n: usize| -> Result<Vec<AgentId>, RemoteError> {
        let fs = ctx.barrier(|c| (0..n).map(|i| c.create_host(&format!("{prefix} {i}"))).collect::<Vec<_>>())?;
        fs.iter().map(|f| f.get().map(|a| a.agent)).collect()
    };
    if config.devices == 0 {
        return Err(RemoteError::Usage("at least one device is required".into()));
    }
    slab_ranges(config.pages, config.cpus).map_err(RemoteError::Usage)?;
    let devices = hosts("device", config.devices)?;
    let array = array_allocate(ctx, array_domain, page_domain, &devices)?;
    let cpus = hosts("cpu", config.cpus)?;
    let global = array.global();
    let input = make_input(config.input, global, config.seed);
    array.scatter(ctx, &input)?;
    let started = Instant::now();
    array_fft3(ctx, &array, &cpus, config.variant)?;
    let transform_time = started.elapsed();
    let output = array.gather(ctx)?;
    let reference = dft3_direct(&input, global);
    let comparison = compare(&input, &output, &reference, global);
    let passed = comparison.within(FFT_TOLERANCE);
    ctx.barrier(|c| {
        for p in &array.pages {
            c.destroy(p);
        }
    })?;
    Ok(Fft3dReport { global, array_domain, page_domain, device_agents: devices, cpu_agents: cpus, comparison, transform_time, passed })
}

/// The full-size configuration, described but never executed.
pub fn full_scale_projection() -> String {
    let pages = 128u64;
    let page = 128u64;
    let n = pages * page;
    let bytes = n * n * n * ELEM_BYTES;
    let cpus = 16u64;
    format!(
        "array {n}^3 complex doubles = {} TiB; {}^3 = {} pages of {page}^3 ({} MiB each); 96 devices, {cpus} slab workers, \
         slab {pages}x{}x{pages} pages, {} page lines per slab (not executed)",
        bytes >> 40,
        pages,
        pages * pages * pages,
        (page * page * page * ELEM_BYTES) >> 20,
        pages / cpus,
        (pages / cpus) * pages,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn numbered(dims: Domain3) -> ArrayPage {
        ArrayPage::from_values(dims, (0..dims.len()).map(|v| c(v as f64)).collect()).unwrap()
    }

    #[test]
    fn transpose13_of_2x1x3() {
        let mut p = numbered(Domain3::new(2, 1, 3).unwrap());
        p.transpose13();
        assert_eq!(p.dims(), Domain3::new(3, 1, 2).unwrap());
        for i in 0..2 {
            for k in 0..3 {
                assert_eq!(p.get(k, 0, i), c((i * 3 + k) as f64));
            }
        }
        assert_eq!(p.values().iter().map(|v| v.re).collect::<Vec<_>>(), vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn transposes_are_involutions() {
        let orig = numbered(Domain3::new(2, 3, 4).unwrap());
        let mut p = orig.clone();
        p.transpose13();
        p.transpose13();
        assert_eq!(p, orig);
        p.transpose12();
        assert_eq!(p.dims(), Domain3::new(3, 2, 4).unwrap());
        assert_eq!(p.get(2, 1, 3), orig.get(1, 2, 3));
        p.transpose12();
        assert_eq!(p, orig);
        let mut one = numbered(Domain3::cube(1).unwrap());
        one.transpose12();
        one.transpose13();
        assert_eq!(one, numbered(Domain3::cube(1).unwrap()));
    }

    #[test]
    fn circulant_counts() {
        assert_eq!(page_counts(Domain3::cube(4).unwrap(), 4), vec![16; 4]);
        assert_eq!(page_counts(Domain3::cube(1).unwrap(), 1), vec![1]);
        assert_eq!(page_counts(Domain3::cube(8).unwrap(), 5), vec![101, 101, 103, 104, 103]);
    }

    #[test]
    fn slab_widths() {
        assert_eq!(slab_ranges(128, 16).unwrap()[1], (8, 16));
        assert!(slab_ranges(10, 4).is_err());
        assert!(slab_ranges(4, 0).is_err());
    }

    #[test]
    fn fft_of_constant_and_linearity() {
        let mut x = vec![c(2.5); 16];
        fft_in_place(&mut x);
        assert!((x[0] - c(40.0)).norm() < 1e-12);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-12));
        let a = make_input(FftInput::Random, Domain3::new(32, 1, 1).unwrap(), 1);
        let b = make_input(FftInput::Random, Domain3::new(32, 1, 1).unwrap(), 2);
        let mut sum: Vec<_> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (mut fa, mut fb) = (a.clone(), b.clone());
        fft_in_place(&mut fa);
        fft_in_place(&mut fb);
        fft_in_place(&mut sum);
        for i in 0..32 {
            assert!((sum[i] - fa[i] - fb[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn fft_matches_direct_dft() {
        let x = make_input(FftInput::Random, Domain3::new(32, 1, 1).unwrap(), 5);
        let mut y = x.clone();
        fft_in_place(&mut y);
        let d = dft_direct(&x);
        let norm = d.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let err = y.iter().zip(&d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-10 * norm, "{err}");
    }

    #[test]
    fn fft_line_transforms_dimension_one() {
        let page = Domain3::new(2, 3, 2).unwrap();
        let global = Domain3::new(6, 3, 2).unwrap();
        let data = make_input(FftInput::Random, global, 3);
        let mut pages: Vec<ArrayPage> = (0..3)
            .map(|p| {
                let mut v = Vec::new();
                for i in 0..2 {
                    for j in 0..3 {
                        for k in 0..2 {
                            v.push(data[global.index(p * 2 + i, j, k)]);
                        }
                    }
                }
                let mut pg = ArrayPage::from_values(page, v).unwrap();
                pg.transpose13();
                pg
            })
            .collect();
        fft_line(&mut pages);
        for j in 0..3 {
            for k in 0..2 {
                let col: Vec<_> = (0..6).map(|i| data[global.index(i, j, k)]).collect();
                let want = dft_direct(&col);
                for (i, w) in want.iter().enumerate() {
                    let got = pages[i / 2].get(k, j, i % 2);
                    assert!((got - w).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn separable_oracle_matches_triple_sum() {
        let dims = Domain3::new(4, 3, 5).unwrap();
        let data = make_input(FftInput::Random, dims, 9);
        let all = dft3_direct(&data, dims);
        for k in [(0, 0, 0), (1, 2, 3), (3, 1, 4)] {
            assert!((all[dims.index(k.0, k.1, k.2)] - dft3_point(&data, dims, k)).norm() < 1e-10);
        }
    }

    #[test]
    fn delta_transforms_to_constant() {
        let dims = Domain3::cube(4).unwrap();
        let out = dft3_direct(&make_input(FftInput::Delta, dims, 0), dims);
        assert!(out.iter().all(|v| (v - c(1.0)).norm() < 1e-12));
    }

    #[test]
    fn projection_describes_full_size() {
        let s = full_scale_projection();
        assert!(s.contains("16384^3"));
        assert!(s.contains("64 TiB"));
        assert!(s.contains("1024 page lines"));
    }
}
