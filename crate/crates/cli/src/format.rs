//! JSON file formats for MDPs and parameter sets. See `docs/formats.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use setmdp_core::{MdpInstance, ParamKind, ParamSet, Policy, StateParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: Option<String>,
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "A")]
    actions: usize,
    gamma: f64,
    #[serde(rename = "C")]
    cost: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    trans: Option<Vec<Vec<Vec<f64>>>>,
    members: Option<Vec<RawMdp>>,
    #[serde(rename = "states")]
    blocks: Option<Vec<Vec<RawBlock>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp {
    #[serde(rename = "C")]
    cost: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    trans: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    c: Vec<f64>,
    #[serde(rename = "P")]
    trans: Vec<Vec<f64>>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn shape_err(path: &Path, field: &str, declared: usize, found: usize) -> CliError {
    parse_err(
        path,
        format!("`{field}` is {declared} but the data has {found}"),
    )
}

fn build_mdp(gamma: f64, cost: Vec<Vec<f64>>, trans: Vec<Vec<Vec<f64>>>, ctx: &str) -> CliResult<MdpInstance> {
    MdpInstance::new(gamma, cost, trans).map_err(|e| CliError::invalid(ctx, e))
}

/// Parses a parameter-set document. A plain MDP (no `kind`) becomes a
/// singleton set.
pub fn parse_param_set(text: &str, path: &Path) -> CliResult<ParamSet> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
    let ctx = path.display().to_string();
    let missing = |field: &str| parse_err(path, format!("missing field `{field}`"));
    let ps = match raw.kind.as_deref() {
        None | Some("mdp") => {
            let cost = raw.cost.ok_or_else(|| missing("C"))?;
            let trans = raw.trans.ok_or_else(|| missing("P"))?;
            ParamSet::singleton(build_mdp(raw.gamma, cost, trans, &ctx)?)
        }
        Some("finite") => {
            let members = raw.members.ok_or_else(|| missing("members"))?;
            let built = members
                .into_iter()
                .enumerate()
                .map(|(i, m)| build_mdp(raw.gamma, m.cost, m.trans, &format!("{ctx}: members[{i}]")))
                .collect::<CliResult<Vec<_>>>()?;
            ParamSet::finite(built).map_err(|e| CliError::invalid(&ctx, e))?
        }
        Some(kind @ ("s_rect_finite" | "s_rect_mixture")) => {
            let blocks = raw.blocks.ok_or_else(|| missing("states"))?;
            let lists = blocks
                .into_iter()
                .enumerate()
                .map(|(s, list)| {
                    list.into_iter()
                        .enumerate()
                        .map(|(j, b)| {
                            StateParams::new(b.c, b.trans)
                                .map_err(|e| CliError::invalid(format!("{ctx}: states[{s}][{j}]"), e))
                        })
                        .collect::<CliResult<Vec<_>>>()
                })
                .collect::<CliResult<Vec<_>>>()?;
            let built = if kind == "s_rect_finite" {
                ParamSet::s_rect_finite(raw.gamma, lists)
            } else {
                ParamSet::s_rect_mixture(raw.gamma, lists)
            };
            built.map_err(|e| CliError::invalid(&ctx, e))?
        }
        Some(other) => {
            return Err(parse_err(
                path,
                format!("unknown `kind` \"{other}\" (expected finite, s_rect_finite or s_rect_mixture)"),
            ))
        }
    };
    if ps.states() != raw.states {
        return Err(shape_err(path, "S", raw.states, ps.states()));
    }
    if ps.actions() != raw.actions {
        return Err(shape_err(path, "A", raw.actions, ps.actions()));
    }
    Ok(ps)
}

pub fn load_param_set(path: &Path) -> CliResult<ParamSet> {
    parse_param_set(&read(path)?, path)
}

/// A policy file is a JSON array of per-state action distributions.
pub fn load_policy(path: &Path) -> CliResult<Policy> {
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&read(path)?).map_err(|e| parse_err(path, e.to_string()))?;
    Policy::new(rows).map_err(|e| CliError::invalid(path.display().to_string(), e))
}

#[derive(Serialize)]
struct MdpDoc<'a> {
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "A")]
    actions: usize,
    gamma: f64,
    #[serde(rename = "C")]
    cost: Vec<&'a [f64]>,
    #[serde(rename = "P")]
    trans: Vec<Vec<&'a [f64]>>,
}

#[derive(Serialize)]
struct MemberDoc<'a> {
    #[serde(rename = "C")]
    cost: Vec<&'a [f64]>,
    #[serde(rename = "P")]
    trans: Vec<Vec<&'a [f64]>>,
}

#[derive(Serialize)]
struct BlockDoc<'a> {
    c: &'a [f64],
    #[serde(rename = "P")]
    trans: Vec<&'a [f64]>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum SetBody<'a> {
    Members { members: Vec<MemberDoc<'a>> },
    States { states: Vec<Vec<BlockDoc<'a>>> },
}

#[derive(Serialize)]
struct SetDoc<'a> {
    kind: &'static str,
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "A")]
    actions: usize,
    gamma: f64,
    #[serde(flatten)]
    body: SetBody<'a>,
}

fn member_doc(m: &MdpInstance) -> MemberDoc<'_> {
    let (s_count, a_count) = (m.states(), m.actions());
    MemberDoc {
        cost: m.cost_flat().chunks(a_count).collect(),
        trans: (0..s_count)
            .map(|s| (0..a_count).map(|a| m.transition_row(s, a)).collect())
            .collect(),
    }
}

fn block_doc(b: &StateParams) -> BlockDoc<'_> {
    let view = b.block();
    BlockDoc {
        c: view.cost,
        trans: view.trans.chunks(view.states).collect(),
    }
}

/// Serializes a parameter set; singletons are written as a plain MDP.
pub fn param_set_value(ps: &ParamSet) -> serde_json::Value {
    let header = |body| SetDoc {
        kind: ps.variant_name(),
        states: ps.states(),
        actions: ps.actions(),
        gamma: ps.discount(),
        body,
    };
    let value = match ps.kind() {
        ParamKind::Finite(ms) if ms.len() == 1 => {
            let doc = member_doc(&ms[0]);
            serde_json::to_value(MdpDoc {
                states: ps.states(),
                actions: ps.actions(),
                gamma: ps.discount(),
                cost: doc.cost,
                trans: doc.trans,
            })
        }
        ParamKind::Finite(ms) => serde_json::to_value(header(SetBody::Members {
            members: ms.iter().map(member_doc).collect(),
        })),
        ParamKind::SRectFinite(lists) | ParamKind::SRectMixture(lists) => {
            serde_json::to_value(header(SetBody::States {
                states: lists.iter().map(|l| l.iter().map(block_doc).collect()).collect(),
            }))
        }
    };
    value.expect("parameter sets serialize to JSON")
}
