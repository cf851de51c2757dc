//! Design construction from command-line flags.

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use lasso_compat::gram::{build_gram, DesignSpec, GoodCompBlock, GramMatrix};

#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    /// Built-in design family (see `list-designs`).
    #[arg(long)]
    pub design: Option<String>,
    /// Load the Gram matrix from a headerless CSV file.
    #[arg(long, value_name = "FILE")]
    pub gram_file: Option<String>,
    /// Load a design description from a JSON file ({"family", "params"}).
    #[arg(long, value_name = "FILE")]
    pub spec_file: Option<String>,
    /// Pair correlation parameter(s), comma separated for block designs.
    #[arg(long, value_delimiter = ',')]
    pub rho: Vec<f64>,
    /// Parent/child constant(s).
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Orthogonal remainder norm(s).
    #[arg(long, value_delimiter = ',')]
    pub tau2: Vec<f64>,
    /// Inactive-pair correlation parameter.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Leading parent weight of the gamma design.
    #[arg(long)]
    pub gamma3: Option<f64>,
    /// Parent weights over the inactive variables.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Vec<f64>,
    /// Number of inactive variables for designs that take one.
    #[arg(long)]
    pub m0: Option<usize>,
    /// Dimension, for the identity design.
    #[arg(long)]
    pub p: Option<usize>,
}

impl DesignArgs {
    fn one(&self, values: &[f64], name: &str) -> Result<f64> {
        match values {
            [v] => Ok(*v),
            [] => bail!("--{name} is required for this design"),
            _ => bail!("--{name} takes a single value for this design"),
        }
    }

    /// Resolves the flags to a design spec. Returns `None` when only a raw
    /// Gram file was given.
    pub fn to_spec(&self) -> Result<Option<DesignSpec>> {
        if let Some(path) = &self.spec_file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            return Ok(Some(
                DesignSpec::from_json(&text).with_context(|| format!("parsing {path}"))?,
            ));
        }
        if self.gram_file.is_some() {
            return Ok(None);
        }
        let name = self
            .design
            .as_deref()
            .ok_or_else(|| anyhow!("one of --design, --gram-file, --spec-file is required"))?;
        let spec = match name.to_ascii_lowercase().as_str() {
            "twovar" => DesignSpec::TwoVar {
                rho: self.one(&self.rho, "rho")?,
            },
            "pairblocks" => {
                if self.rho.is_empty() {
                    bail!("--rho is required for pairblocks");
                }
                DesignSpec::PairBlocks {
                    rhos: self.rho.clone(),
                }
            }
            "pairblocksortho" | "trivial" => DesignSpec::PairBlocksPlusOrthogonal {
                rho: self.one(&self.rho, "rho")?,
                m0: self.m0.ok_or_else(|| anyhow!("--m0 is required"))?,
            },
            "parentchild" | "parentchildsingle" => DesignSpec::ParentChildSingle {
                rho: self.one(&self.rho, "rho")?,
                c: self.one(&self.c, "c")?,
            },
            "parentchildmany" => {
                if self.c.is_empty() {
                    bail!("--c is required for parentchildmany");
                }
                DesignSpec::ParentChildMany {
                    rho: self.one(&self.rho, "rho")?,
                    cs: self.c.clone(),
                }
            }
            "parentchildblock" | "parentchild2n" => {
                if self.rho.is_empty() {
                    bail!("--rho is required for parentchildblock");
                }
                DesignSpec::ParentChildBlock2N {
                    rhos: self.rho.clone(),
                    c: self.one(&self.c, "c")?,
                }
            }
            "goodcomp" => DesignSpec::GoodComp {
                rho: self.one(&self.rho, "rho")?,
                c: self.one(&self.c, "c")?,
                tau2: self.one(&self.tau2, "tau2")?,
            },
            "goodlasso2" => DesignSpec::GoodLasso2 {
                rho: self.one(&self.rho, "rho")?,
                c: self.one(&self.c, "c")?,
            },
            "goodlasso3" => DesignSpec::GoodLasso3 {
                rho: self.one(&self.rho, "rho")?,
            },
            "blockgoodcomp" => {
                let n = self.rho.len();
                if n == 0 || self.c.len() != n || self.tau2.len() != n {
                    bail!("blockgoodcomp needs --rho, --c, --tau2 lists of equal length");
                }
                DesignSpec::BlockGoodComp2N {
                    blocks: (0..n)
                        .map(|k| GoodCompBlock {
                            rho: self.rho[k],
                            c: self.c[k],
                            tau2: self.tau2[k],
                        })
                        .collect(),
                }
            }
            "childparentgamma" => DesignSpec::ChildParentGamma {
                theta: self.theta.ok_or_else(|| anyhow!("--theta is required"))?,
                gamma3: self.gamma3.ok_or_else(|| anyhow!("--gamma3 is required"))?,
            },
            "childparentsym" => DesignSpec::ChildParentSym {
                theta: self.theta.ok_or_else(|| anyhow!("--theta is required"))?,
                c: self.one(&self.c, "c")?,
            },
            "childparentortho" => {
                if self.gammas.is_empty() {
                    bail!("--gammas is required for childparentortho");
                }
                DesignSpec::ChildParentOrthoInactive {
                    c: self.one(&self.c, "c")?,
                    gammas: self.gammas.clone(),
                }
            }
            "identity" => {
                let p = self
                    .p
                    .ok_or_else(|| anyhow!("--p is required for identity"))?;
                let mut rows = vec![vec![0.0; p]; p];
                for (j, row) in rows.iter_mut().enumerate() {
                    row[j] = 1.0;
                }
                DesignSpec::Custom { gram: rows }
            }
            other => bail!("unknown design '{other}' (see list-designs)"),
        };
        Ok(Some(spec))
    }

    /// Builds the Gram matrix (from the family or the matrix file) plus the
    /// spec when one is known.
    pub fn resolve(&self) -> Result<(GramMatrix, Option<DesignSpec>)> {
        if let Some(spec) = self.to_spec()? {
            let gram = build_gram(&spec)?;
            return Ok((gram, Some(spec)));
        }
        let path = self
            .gram_file
            .as_ref()
            .expect("no spec implies a gram file");
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let gram = GramMatrix::from_csv(&text).with_context(|| format!("parsing {path}"))?;
        Ok((gram, None))
    }
}

/// 1-based column list as used on the command line.
pub fn parse_set(text: &str, p: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in text.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let idx: usize = tok.parse().with_context(|| format!("bad index '{tok}'"))?;
        if idx == 0 || idx > p {
            bail!("index {idx} out of range 1..={p}");
        }
        out.push(idx - 1);
    }
    Ok(out)
}

pub const DESIGN_HELP: &[(&str, &str)] = &[
    ("twovar", "--rho R                     (p = 2 active pair)"),
    (
        "pairblocks",
        "--rho R1,...,RN             (p = 2N orthogonal pairs)",
    ),
    (
        "pairblocksortho",
        "--rho R --m0 M              (pair plus M orthonormal inactive)",
    ),
    (
        "parentchild",
        "--rho R --c C               (one child of the pair)",
    ),
    (
        "parentchildmany",
        "--rho R --c C1,...,Cm       (m children of the pair)",
    ),
    (
        "parentchildblock",
        "--rho R1,...,RN --c C       (one child of all N pairs)",
    ),
    (
        "goodcomp",
        "--rho R --c C --tau2 T      (paired children, shared remainder)",
    ),
    (
        "goodlasso2",
        "--rho R --c C               (paired children, zero constant)",
    ),
    (
        "goodlasso3",
        "--rho R                     (non-unique minimizer variant)",
    ),
    (
        "blockgoodcomp",
        "--rho .. --c .. --tau2 ..   (N orthogonal goodcomp blocks)",
    ),
    (
        "childparentgamma",
        "--theta T --gamma3 G        (actives are children; zero constant)",
    ),
    (
        "childparentsym",
        "--theta T --c C             (actives are children; irrepresentable)",
    ),
    (
        "childparentortho",
        "--c C --gammas G1,...,Gm    (orthonormal parents)",
    ),
    ("identity", "--p P                       (identity Gram)"),
];
