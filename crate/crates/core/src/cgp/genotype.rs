use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::FunctionLibrary;

/// Integer genome: `eta` functional rows followed by `outputs` output rows,
/// each `1 + alpha + rho` genes wide.
///
/// Addresses are 1-based: inputs occupy `1..=iota`, functional row `r`
/// (0-based) sits at address `iota + r + 1`. In a functional row, column 0
/// is the function id, columns `1..=alpha` are connection addresses and the
/// rest are raw parameters. Output rows only use column 1; their other
/// columns are padding that is carried but never read.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Genotype {
    iota: usize,
    eta: usize,
    outputs: usize,
    alpha: usize,
    rho: usize,
    matrix: Vec<u32>,
}

/// Column holding an output row's source address.
pub const OUTPUT_COL: usize = 1;

impl Genotype {
    /// Zero-filled genotype of the given shape. It is not valid until every
    /// function and connection gene has been set.
    pub fn zeroed(iota: usize, eta: usize, outputs: usize, alpha: usize, rho: usize) -> Result<Self> {
        if iota == 0 || eta == 0 || outputs == 0 || alpha == 0 {
            return Err(Error::Shape(format!(
                "iota={iota}, eta={eta}, o={outputs}, alpha={alpha} must all be >= 1"
            )));
        }
        let n = 1 + alpha + rho;
        Ok(Self {
            iota,
            eta,
            outputs,
            alpha,
            rho,
            matrix: vec![0; (eta + outputs) * n],
        })
    }

    pub fn from_matrix(
        iota: usize,
        eta: usize,
        outputs: usize,
        alpha: usize,
        rho: usize,
        matrix: Vec<u32>,
    ) -> Result<Self> {
        let mut g = Self::zeroed(iota, eta, outputs, alpha, rho)?;
        if matrix.len() != g.matrix.len() {
            return Err(Error::Shape(format!(
                "matrix has {} genes, expected {}x{}",
                matrix.len(),
                eta + outputs,
                g.cols()
            )));
        }
        g.matrix = matrix;
        Ok(g)
    }

    pub fn iota(&self) -> usize {
        self.iota
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn rows(&self) -> usize {
        self.eta + self.outputs
    }

    pub fn cols(&self) -> usize {
        1 + self.alpha + self.rho
    }

    pub fn matrix(&self) -> &[u32] {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.matrix[row * self.cols() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u32) {
        let n = self.cols();
        self.matrix[row * n + col] = v;
    }

    pub fn row(&self, row: usize) -> &[u32] {
        let n = self.cols();
        &self.matrix[row * n..(row + 1) * n]
    }

    /// Graph address of functional row `row`.
    pub fn address_of(&self, row: usize) -> u32 {
        (self.iota + row + 1) as u32
    }

    pub fn function(&self, row: usize) -> u32 {
        self.get(row, 0)
    }

    pub fn connections(&self, row: usize) -> &[u32] {
        &self.row(row)[1..=self.alpha]
    }

    pub fn params(&self, row: usize) -> &[u32] {
        &self.row(row)[1 + self.alpha..]
    }

    pub fn output_address(&self, k: usize) -> u32 {
        self.get(self.eta + k, OUTPUT_COL)
    }

    pub fn set_output_address(&mut self, k: usize, addr: u32) {
        self.set(self.eta + k, OUTPUT_COL, addr)
    }

    /// Inclusive legal range of a functional gene, given library size `phi`.
    pub fn gene_range(&self, row: usize, col: usize, phi: usize) -> (u32, u32) {
        if col == 0 {
            (1, phi as u32)
        } else if col <= self.alpha {
            (1, (self.iota + row) as u32)
        } else {
            (0, 255)
        }
    }

    /// Inclusive legal range of an output address.
    pub fn output_range(&self) -> (u32, u32) {
        (1, (self.iota + self.eta) as u32)
    }

    /// Checks every gene against its legal range for `library`.
    pub fn validate(&self, library: &FunctionLibrary) -> Result<()> {
        if self.alpha < library.alpha() || self.rho < library.rho() {
            return Err(Error::Shape(format!(
                "genotype has alpha={}, rho={} but library needs alpha={}, rho={}",
                self.alpha,
                self.rho,
                library.alpha(),
                library.rho()
            )));
        }
        let phi = library.len();
        for row in 0..self.eta {
            for col in 0..self.cols() {
                let (lo, hi) = self.gene_range(row, col, phi);
                let v = self.get(row, col);
                if v < lo || v > hi {
                    let what = if col == 0 {
                        "function"
                    } else if col <= self.alpha {
                        "connection"
                    } else {
                        "parameter"
                    };
                    return Err(Error::Validity {
                        row,
                        col,
                        reason: format!("{what} gene {v} outside [{lo}, {hi}]"),
                    });
                }
            }
        }
        let (lo, hi) = self.output_range();
        for k in 0..self.outputs {
            let v = self.output_address(k);
            if v < lo || v > hi {
                return Err(Error::Validity {
                    row: self.eta + k,
                    col: OUTPUT_COL,
                    reason: format!("output address {v} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    pub fn to_record(&self, library: &FunctionLibrary) -> GenotypeRecord {
        GenotypeRecord {
            iota: self.iota,
            eta: self.eta,
            o: self.outputs,
            alpha: self.alpha,
            rho: self.rho,
            matrix: self.matrix.clone(),
            library_id: library.id().to_string(),
            library_hash: library.hash().to_string(),
        }
    }
}

/// Serialized form of a genotype together with the library it targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenotypeRecord {
    pub iota: usize,
    pub eta: usize,
    pub o: usize,
    pub alpha: usize,
    pub rho: usize,
    /// Row-major, `(eta + o) * (1 + alpha + rho)` genes.
    pub matrix: Vec<u32>,
    pub library_id: String,
    pub library_hash: String,
}

impl GenotypeRecord {
    /// Rebuilds the genotype, checking the library hash and every gene.
    pub fn into_genotype(self, library: &FunctionLibrary) -> Result<Genotype> {
        library.verify_hash(&self.library_hash)?;
        let g = Genotype::from_matrix(self.iota, self.eta, self.o, self.alpha, self.rho, self.matrix)?;
        g.validate(library)?;
        Ok(g)
    }
}
