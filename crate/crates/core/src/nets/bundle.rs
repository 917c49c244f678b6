use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::config::{Mode, NetConfig};
use super::discriminator::{PlainDiscriminator, SetDiscriminator};
use super::generator::Generator;
use super::translator::Translator;
use crate::autograd::{Binding, Graph, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::time::{TimeEncodingMode, TimeOfDay};

/// Shared per-sequence latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentContext {
    pub values: Vec<f32>,
}

impl LatentContext {
    pub fn sample(d_z: usize, rng: &mut impl Rng) -> Self {
        Self {
            values: (0..d_z).map(|_| rng.sample::<f32, _>(StandardNormal)).collect(),
        }
    }

    pub fn zeros(d_z: usize) -> Self {
        Self {
            values: vec![0.0; d_z],
        }
    }
}

/// The networks of one training mode. `g_a` and `d_t` exist only in
/// [`Mode::Multidomain`].
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub mode: Mode,
    pub config: NetConfig,
    pub g_t: Generator,
    pub d_a: SetDiscriminator,
    pub g_a: Option<Translator>,
    pub d_t: Option<PlainDiscriminator>,
}

pub const NETWORK_NAMES: [&str; 4] = ["g_t", "d_a", "g_a", "d_t"];

impl ModelBundle {
    /// `(name, store)` for every network present, in canonical order.
    pub fn stores(&self) -> Vec<(&'static str, &ParamStore)> {
        let mut out = vec![("g_t", &self.g_t.store), ("d_a", &self.d_a.store)];
        if let Some(g_a) = &self.g_a {
            out.push(("g_a", &g_a.store));
        }
        if let Some(d_t) = &self.d_t {
            out.push(("d_t", &d_t.store));
        }
        out
    }

    pub fn stores_mut(&mut self) -> Vec<(&'static str, &mut ParamStore)> {
        let mut out = vec![
            ("g_t", &mut self.g_t.store),
            ("d_a", &mut self.d_a.store),
        ];
        if let Some(g_a) = &mut self.g_a {
            out.push(("g_a", &mut g_a.store));
        }
        if let Some(d_t) = &mut self.d_t {
            out.push(("d_t", &mut d_t.store));
        }
        out
    }

    pub fn num_parameters(&self) -> Vec<(&'static str, usize)> {
        self.stores()
            .into_iter()
            .map(|(n, s)| (n, s.num_scalars()))
            .collect()
    }

    pub fn time_encoding(&self) -> TimeEncodingMode {
        self.config.time_encoding
    }
}

fn net_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded initialisation; each network draws from its own stream so adding
/// or removing one leaves the others unchanged.
pub fn init_models(config: &NetConfig, mode: Mode, seed: u64) -> Result<ModelBundle> {
    config.validate()?;
    let mut g_t = Generator::new(config, mode.uses_latent(), &mut net_rng(seed, 0));
    if let Some(path) = &config.pretrained_encoder {
        load_pretrained_encoder(&mut g_t, path)?;
    }
    let d_a = SetDiscriminator::new(config, &mut net_rng(seed, 1));
    let (g_a, d_t) = if mode.has_translator() {
        (
            Some(Translator::new(config, &mut net_rng(seed, 2))),
            Some(PlainDiscriminator::new(config, &mut net_rng(seed, 3))),
        )
    } else {
        (None, None)
    };
    Ok(ModelBundle {
        mode,
        config: config.clone(),
        g_t,
        d_a,
        g_a,
        d_t,
    })
}

pub(crate) fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn tensor_from_view(view: &TensorView) -> std::result::Result<Tensor, String> {
    if view.dtype() != Dtype::F32 {
        return Err(format!("dtype {:?}, expected F32", view.dtype()));
    }
    let data = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::from_vec(view.shape(), data).map_err(|e| e.to_string())
}

/// Overwrites every `encoder.*` parameter of `g` from a safetensors file.
/// Keys are `encoder.stage{s}.conv{k}.weight` (`[out, in, 3, 3]`) and
/// `encoder.stage{s}.conv{k}.bias` (`[out]`), all `F32`. Extra keys are
/// ignored; a missing key or shape mismatch is an error.
pub fn load_pretrained_encoder(g: &mut Generator, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::WeightsLoad(format!("{}: {e}", path.display())))?;
    let file = SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::WeightsLoad(format!("{}: {e}", path.display())))?;
    let ids: Vec<_> = g
        .store
        .ids()
        .filter(|&id| g.store.name(id).starts_with("encoder."))
        .collect();
    for id in ids {
        let name = g.store.name(id).to_string();
        let view = file
            .tensor(&name)
            .map_err(|_| Error::WeightsLoad(format!("missing key {name}")))?;
        let t = tensor_from_view(&view).map_err(|e| Error::WeightsLoad(format!("{name}: {e}")))?;
        if t.shape() != g.store.get(id).shape() {
            return Err(Error::WeightsLoad(format!(
                "{name}: shape {:?}, expected {:?}",
                t.shape(),
                g.store.get(id).shape()
            )));
        }
        *g.store.get_mut(id) = t;
    }
    Ok(())
}

/// Writes the generator's encoder parameters in the format
/// [`load_pretrained_encoder`] reads.
pub fn save_encoder_weights(g: &Generator, path: &Path) -> Result<()> {
    let tensors: Vec<(String, Vec<usize>, Vec<u8>)> = g
        .store
        .iter()
        .filter(|(n, _)| n.starts_with("encoder."))
        .map(|(n, t)| (n.to_string(), t.shape().to_vec(), tensor_bytes(t)))
        .collect();
    let views = tensors
        .iter()
        .map(|(n, s, b)| {
            TensorView::new(Dtype::F32, s.clone(), b).map(|v| (n.clone(), v))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::WeightsLoad(e.to_string()))?;
    let bytes = safetensors::serialize(views, None::<HashMap<String, String>>)
        .map_err(|e| Error::WeightsLoad(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// `[N, T]` time-encoding rows.
pub fn time_tensor(times: &[TimeOfDay], mode: TimeEncodingMode) -> Tensor {
    let data: Vec<f32> = times.iter().flat_map(|&t| mode.encode(t)).collect();
    Tensor::from_vec(&[times.len(), mode.channels()], data).expect("time tensor shape")
}

/// `[N, d_z]` with the same latent in every row.
pub fn latent_tensor(z: &LatentContext, rows: usize) -> Tensor {
    let data = z.values.iter().copied().cycle().take(rows * z.values.len()).collect();
    Tensor::from_vec(&[rows, z.values.len()], data).expect("latent tensor shape")
}

fn check_divisible(img: &ImageGrid, stride: usize) -> Result<()> {
    let (h, w) = img.dims();
    if h == 0 || w == 0 || h % stride != 0 || w % stride != 0 {
        return Err(Error::Shape(format!(
            "image {h}x{w} is not divisible by the network stride {stride}"
        )));
    }
    Ok(())
}

fn check_latent(g: &Generator, z: Option<&LatentContext>) -> Result<()> {
    match z {
        _ if g.d_z() == 0 => Ok(()),
        Some(z) if z.values.len() == g.d_z() => Ok(()),
        Some(z) => Err(Error::Shape(format!(
            "latent has {} values, generator expects {}",
            z.values.len(),
            g.d_z()
        ))),
        None => Err(Error::Shape("generator needs a latent vector".into())),
    }
}

fn check_disc_size(images: &[&ImageGrid], min_side: usize) -> Result<()> {
    for img in images {
        let (h, w) = img.dims();
        if h < min_side || w < min_side {
            return Err(Error::Shape(format!(
                "image {h}x{w} is smaller than the discriminator minimum {min_side}"
            )));
        }
    }
    Ok(())
}

/// One output frame per time, all from `image` and a single shared `z`.
/// Generators without a latent ignore `z`.
pub fn generate_frameset(
    g: &Generator,
    mode: TimeEncodingMode,
    image: &ImageGrid,
    times: &[TimeOfDay],
    z: Option<&LatentContext>,
) -> Result<Vec<ImageGrid>> {
    if times.is_empty() {
        return Err(Error::Shape("no timestamps requested".into()));
    }
    check_divisible(image, g.stride())?;
    check_latent(g, z)?;
    let mut out = Vec::with_capacity(times.len());
    // bounded batches keep activation memory flat for long schedules
    for chunk in times.chunks(16) {
        let mut graph = Graph::new();
        let mut p = Binding::frozen(&g.store);
        let imgs = vec![image; chunk.len()];
        let x = graph.input(ImageGrid::batch(&imgs)?);
        let t = graph.input(time_tensor(chunk, mode));
        let zv = match z {
            Some(z) if g.d_z() > 0 => Some(graph.input(latent_tensor(z, chunk.len()))),
            _ => None,
        };
        let y = g.forward(&mut graph, &mut p, x, t, zv);
        out.extend(ImageGrid::unbatch(graph.value(y))?);
    }
    Ok(out)
}

pub fn generator_forward(
    g: &Generator,
    mode: TimeEncodingMode,
    image: &ImageGrid,
    t: TimeOfDay,
    z: Option<&LatentContext>,
) -> Result<ImageGrid> {
    Ok(generate_frameset(g, mode, image, &[t], z)?.remove(0))
}

/// Unconditional realism score of each image, in `(0, 1)`.
pub fn disc_uncond_scores(d: &SetDiscriminator, images: &[&ImageGrid]) -> Result<Vec<f64>> {
    check_disc_size(images, d.min_side())?;
    let mut graph = Graph::new();
    let mut p = Binding::frozen(&d.store);
    let x = graph.input(ImageGrid::batch(images)?);
    let f = d.features(&mut graph, &mut p, x);
    let s = d.uncond_head(&mut graph, &mut p, f);
    Ok(graph.value(s).data().iter().map(|&v| v as f64).collect())
}

pub fn disc_uncond_score(d: &SetDiscriminator, image: &ImageGrid) -> Result<f64> {
    Ok(disc_uncond_scores(d, &[image])?[0])
}

/// Conditional score of one set of `(image, time)` pairs. Independent of the
/// order of `pairs`.
pub fn disc_cond_score(
    d: &SetDiscriminator,
    mode: TimeEncodingMode,
    pairs: &[(ImageGrid, TimeOfDay)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySet);
    }
    let images: Vec<&ImageGrid> = pairs.iter().map(|(i, _)| i).collect();
    let times: Vec<TimeOfDay> = pairs.iter().map(|&(_, t)| t).collect();
    check_disc_size(&images, d.min_side())?;
    let mut graph = Graph::new();
    let mut p = Binding::frozen(&d.store);
    let x = graph.input(ImageGrid::batch(&images)?);
    let t = graph.input(time_tensor(&times, mode));
    let f = d.features(&mut graph, &mut p, x);
    let s = d.cond_head(&mut graph, &mut p, f, t, pairs.len());
    Ok(graph.scalar_value(s) as f64)
}

pub fn translator_forward(g_a: &Translator, image: &ImageGrid) -> Result<ImageGrid> {
    check_divisible(image, g_a.stride())?;
    let mut graph = Graph::new();
    let mut p = Binding::frozen(&g_a.store);
    let x = graph.input(image.to_tensor());
    let y = g_a.forward(&mut graph, &mut p, x);
    Ok(ImageGrid::unbatch(graph.value(y))?.remove(0))
}

/// Scores from the unlabeled-side discriminator.
pub fn plain_disc_scores(d: &PlainDiscriminator, images: &[&ImageGrid]) -> Result<Vec<f64>> {
    check_disc_size(images, d.min_side())?;
    let mut graph = Graph::new();
    let mut p = Binding::frozen(&d.store);
    let x = graph.input(ImageGrid::batch(images)?);
    let s = d.forward(&mut graph, &mut p, x);
    Ok(graph.value(s).data().iter().map(|&v| v as f64).collect())
}

