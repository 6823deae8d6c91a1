//! Raw-values payload: a list of critical values carried only as flags.
//!
//! The values themselves are not transmitted; the receiver recomputes them
//! on its own platform and uses the flags to land on the sender's results.

use crate::container::{GridDesc, GuardedStream, PayloadHeader};
use crate::error::{Error, Result};
use crate::hyperprior::{table_config, table_id_of};
use crate::platform_sim::Perturbation;
use crate::quantizer::{GridKind, QuantGrid};
use crate::safeguard::GuardConfig;
use crate::session::{DecodeSession, EncodeSession, Protection};

fn grid_desc(cfg: &GuardConfig) -> Result<GridDesc> {
    match *cfg.grid().kind() {
        GridKind::Uniform { step, offset } if cfg.grid().domain().is_none() && cfg.edge_clip().is_none() => {
            Ok(GridDesc::Uniform { step, offset })
        }
        GridKind::Boundaries { .. } => table_id_of(cfg.grid()).map(GridDesc::Table).ok_or_else(|| {
            Error::ConfigRejected("boundary table is not registered".into())
        }),
        _ => Err(Error::ConfigRejected(
            "raw payloads carry unbounded uniform grids or registered tables".into(),
        )),
    }
}

pub fn config_from_stream(stream: &GuardedStream) -> Result<GuardConfig> {
    let cfg = match stream.grid {
        GridDesc::Uniform { step, offset } => {
            GuardConfig::new(QuantGrid::uniform(step, offset)?, stream.epsilon, stream.mode, None)
        }
        GridDesc::Table(id) => table_config(id, stream.epsilon, stream.mode),
    };
    cfg.map_err(|e| Error::MalformedStream(e.to_string()))
}

/// Guard `values`, returning the stream and the values both sides will use.
pub fn protect_values(cfg: &GuardConfig, values: &[f64]) -> Result<(GuardedStream, Vec<f64>)> {
    let grid = grid_desc(cfg)?;
    let mut session = EncodeSession::new(cfg, Protection::Guarded);
    let out = values.iter().map(|&v| session.value(v)).collect::<Result<Vec<_>>>()?;
    let section = session.finish()?;
    let stream = GuardedStream {
        mode: cfg.mode(),
        epsilon: cfg.epsilon(),
        grid,
        p0_q16: section.p0_q16,
        flag_count: section.flag_count,
        payload: PayloadHeader::Raw { value_count: values.len() as u64 },
        safeguard: section.bytes,
        main: Vec::new(),
    };
    Ok((stream, out))
}

/// Recover the sender's values from this platform's `values_prime`.
pub fn recover_values(stream: &GuardedStream, values_prime: &[f64]) -> Result<Vec<f64>> {
    recover_values_with(stream, values_prime, &Perturbation::none())
}

pub fn recover_values_with(
    stream: &GuardedStream,
    values_prime: &[f64],
    perturb: &Perturbation,
) -> Result<Vec<f64>> {
    let PayloadHeader::Raw { value_count } = stream.payload else {
        return Err(Error::MalformedStream("not a raw-values stream".into()));
    };
    if value_count != values_prime.len() as u64 {
        return Err(Error::InvalidInput(format!(
            "stream holds {value_count} values, {} supplied",
            values_prime.len()
        )));
    }
    if !stream.main.is_empty() {
        return Err(Error::MalformedStream("raw-values stream with a main payload".into()));
    }
    let cfg = config_from_stream(stream)?;
    let mut session = DecodeSession::new(&cfg, stream, perturb)?;
    let out = values_prime.iter().map(|&v| session.value(v)).collect::<Result<Vec<_>>>()?;
    session.finish()?;
    Ok(out)
}
