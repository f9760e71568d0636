//! CSV loading, schema inference, and the typed in-memory table.
//!
//! A [`Dataset`] owns the instance-id space used by the rest of the
//! pipeline: ids default to the 1-based row index, or come from a designated
//! id column that is then excluded from analysis. Cells are numeric,
//! categorical, or missing; missing is first-class here and resolved later by
//! the binarization policy.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Numeric,
    Categorical,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarKind::Numeric => "numeric",
            VarKind::Categorical => "categorical",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VarKind,
}

/// Ordered variable declarations; order is significant and survives
/// save/load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<VariableSpec>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_reader(BufReader::new(file))?;
        if schema.variables.is_empty() {
            return Err(Error::EmptyInput(format!("{}: schema has no variables", path.display())));
        }
        Ok(schema)
    }
}

/// One column of parsed cells. Categorical tokens are interned.
#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical { codes: Vec<Option<u32>>, dict: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical { codes, .. } => codes[row].is_none(),
        }
    }
}

/// A cell that could not be parsed for its declared kind (or, for
/// categoricals, matched the missing-token list). Counted, not fatal.
#[derive(Debug, Clone)]
pub struct LoadWarning {
    /// 1-based data row (header not counted).
    pub row: usize,
    pub column: String,
    pub token: String,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Column used for instance ids and excluded from the variables.
    pub id_column: Option<String>,
    /// Tokens treated as missing after trimming.
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            id_column: None,
            missing_tokens: vec!["?".to_owned(), String::new()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub instance_ids: Vec<String>,
    pub columns: Vec<Column>,
    /// Unparseable numeric cells turned missing during load.
    pub warnings: Vec<LoadWarning>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn n_vars(&self) -> usize {
        self.schema.len()
    }

    /// Writes the table back out, ids omitted (they are positional unless an
    /// id column was designated, in which case it is re-emitted first).
    pub fn write_csv(&self, path: impl AsRef<Path>, id_header: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header: Vec<&str> = Vec::new();
        if let Some(h) = id_header {
            header.push(h);
        }
        header.extend(self.schema.variables.iter().map(|v| v.name.as_str()));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if id_header.is_some() {
                rec.push(self.instance_ids[row].clone());
            }
            for col in &self.columns {
                rec.push(match col {
                    Column::Numeric(v) => v[row].map(|x| format!("{x}")).unwrap_or_default(),
                    Column::Categorical { codes, dict } => {
                        codes[row].map(|c| dict[c as usize].clone()).unwrap_or_default()
                    }
                });
            }
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file)))
}

fn read_header(rdr: &mut csv::Reader<BufReader<File>>, path: &Path) -> Result<Vec<String>> {
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_owned()).collect();
    let mut seen = HashMap::new();
    for name in &names {
        if seen.insert(name.clone(), ()).is_some() {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(names)
}

fn parse_finite(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Scans up to `sample_rows` data rows and declares a column numeric iff
/// every non-empty sampled cell parses as a finite number. The id column, if
/// given, is excluded from the result.
pub fn infer_schema(
    path: impl AsRef<Path>,
    sample_rows: usize,
    id_column: Option<&str>,
) -> Result<Schema> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let names = read_header(&mut rdr, path)?;
    if let Some(id) = id_column {
        if !names.iter().any(|n| n == id) {
            return Err(Error::UnknownColumn(id.to_owned()));
        }
    }
    let mut numeric = vec![true; names.len()];
    let mut rows = 0usize;
    for record in rdr.records().take(sample_rows) {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows += 1;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if !cell.is_empty() && parse_finite(cell).is_none() {
                numeric[c] = false;
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput(format!("{}: no data rows", path.display())));
    }
    let variables = names
        .into_iter()
        .zip(numeric)
        .filter(|(name, _)| Some(name.as_str()) != id_column)
        .map(|(name, num)| VariableSpec {
            name,
            kind: if num { VarKind::Numeric } else { VarKind::Categorical },
        })
        .collect();
    Ok(Schema { variables })
}

/// Loads and types a CSV against `schema`. Header columns are matched by
/// name, order-insensitively; extra file columns other than the id column are
/// rejected, as are schema names absent from the file.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &Schema,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let names = read_header(&mut rdr, path)?;

    let id_pos = match &opts.id_column {
        Some(id) => Some(
            names
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownColumn(id.clone()))?,
        ),
        None => None,
    };
    // file position of every schema variable
    let mut positions = Vec::with_capacity(schema.len());
    for var in &schema.variables {
        match names.iter().position(|n| *n == var.name) {
            Some(p) if Some(p) != id_pos => positions.push(p),
            _ => return Err(Error::SchemaMismatch(format!("column {:?} missing from file", var.name))),
        }
    }
    let extra: Vec<&String> = names
        .iter()
        .enumerate()
        .filter(|(i, n)| Some(*i) != id_pos && schema.index_of(n).is_none())
        .map(|(_, n)| n)
        .collect();
    if !extra.is_empty() {
        return Err(Error::SchemaMismatch(format!("file has undeclared columns {extra:?}")));
    }

    let is_missing = |tok: &str| opts.missing_tokens.iter().any(|m| m == tok);
    let mut columns: Vec<Column> = schema
        .variables
        .iter()
        .map(|v| match v.kind {
            VarKind::Numeric => Column::Numeric(Vec::new()),
            VarKind::Categorical => Column::Categorical { codes: Vec::new(), dict: Vec::new() },
        })
        .collect();
    let mut interners: Vec<HashMap<String, u32>> =
        schema.variables.iter().map(|_| HashMap::new()).collect();
    let mut instance_ids = Vec::new();
    let mut warnings = Vec::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = r + 1;
        instance_ids.push(match id_pos {
            Some(p) => record.get(p).unwrap_or("").trim().to_owned(),
            None => row.to_string(),
        });
        for (v, &p) in positions.iter().enumerate() {
            let tok = record.get(p).unwrap_or("").trim();
            match &mut columns[v] {
                Column::Numeric(cells) => {
                    if is_missing(tok) {
                        cells.push(None);
                    } else {
                        match parse_finite(tok) {
                            Some(x) => cells.push(Some(x)),
                            None => {
                                warnings.push(LoadWarning {
                                    row,
                                    column: schema.variables[v].name.clone(),
                                    token: tok.to_owned(),
                                });
                                cells.push(None);
                            }
                        }
                    }
                }
                Column::Categorical { codes, dict } => {
                    if is_missing(tok) {
                        codes.push(None);
                    } else {
                        let next = dict.len() as u32;
                        let code = *interners[v].entry(tok.to_owned()).or_insert(next);
                        if code == next {
                            dict.push(tok.to_owned());
                        }
                        codes.push(Some(code));
                    }
                }
            }
        }
    }

    if instance_ids.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no data rows", path.display())));
    }
    let mut seen = HashMap::new();
    for id in &instance_ids {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(Dataset { schema: schema.clone(), instance_ids, columns, warnings })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn infers_numeric_and_categorical() {
        let f = write_tmp("a,b,c\n1,x,3.5\n2,y,4\n3,z,-1e3\n");
        let schema = infer_schema(f.path(), 1000, None).unwrap();
        let kinds: Vec<VarKind> = schema.variables.iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![VarKind::Numeric, VarKind::Categorical, VarKind::Numeric]);
    }

    #[test]
    fn non_numeric_token_forces_categorical() {
        let f = write_tmp("v\n1\n2\nx\n");
        let schema = infer_schema(f.path(), 1000, None).unwrap();
        assert_eq!(schema.variables[0].kind, VarKind::Categorical);
    }

    #[test]
    fn empty_cells_do_not_block_numeric_inference() {
        let f = write_tmp("v\n1\n\n3\n");
        let schema = infer_schema(f.path(), 1000, None).unwrap();
        assert_eq!(schema.variables[0].kind, VarKind::Numeric);
    }

    #[test]
    fn single_cell_table() {
        let f = write_tmp("x\n3.2\n");
        let schema = infer_schema(f.path(), 10, None).unwrap();
        let ds = load_dataset(f.path(), &schema, &LoadOptions::default()).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.n_vars(), 1);
        match &ds.columns[0] {
            Column::Numeric(v) => assert_eq!(v[0], Some(3.2)),
            _ => panic!("expected numeric"),
        }
    }

    #[test]
    fn unparseable_numeric_cell_becomes_missing_with_warning() {
        let f = write_tmp("v\n1.0\nabc\n3.0\n");
        let schema = Schema {
            variables: vec![VariableSpec { name: "v".into(), kind: VarKind::Numeric }],
        };
        let ds = load_dataset(f.path(), &schema, &LoadOptions::default()).unwrap();
        assert_eq!(ds.warnings.len(), 1);
        assert_eq!(ds.warnings[0].row, 2);
        assert!(ds.columns[0].is_missing(1));
        assert!(!ds.columns[0].is_missing(0));
    }

    #[test]
    fn missing_tokens_are_silent() {
        let f = write_tmp("v,w\n?,a\n2,?\n");
        let schema = infer_schema(f.path(), 10, None).unwrap();
        // "?" cells make v categorical under the literal parse rule
        assert_eq!(schema.variables[0].kind, VarKind::Categorical);
        let ds = load_dataset(f.path(), &schema, &LoadOptions::default()).unwrap();
        assert!(ds.warnings.is_empty());
        assert!(ds.columns[0].is_missing(0));
        assert!(ds.columns[1].is_missing(1));
    }

    #[test]
    fn id_column_is_used_and_excluded() {
        let f = write_tmp("id,v\nr1,1\nr2,2\n");
        let schema = infer_schema(f.path(), 10, Some("id")).unwrap();
        assert_eq!(schema.len(), 1);
        let opts = LoadOptions { id_column: Some("id".into()), ..Default::default() };
        let ds = load_dataset(f.path(), &schema, &opts).unwrap();
        assert_eq!(ds.instance_ids, vec!["r1", "r2"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp("id,v\nr1,1\nr1,2\n");
        let schema = infer_schema(f.path(), 10, Some("id")).unwrap();
        let opts = LoadOptions { id_column: Some("id".into()), ..Default::default() };
        assert!(matches!(
            load_dataset(f.path(), &schema, &opts),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn header_schema_mismatch_lists_name() {
        let f = write_tmp("a,b\n1,2\n");
        let schema = Schema {
            variables: vec![VariableSpec { name: "zz".into(), kind: VarKind::Numeric }],
        };
        let err = load_dataset(f.path(), &schema, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn ragged_rows_error() {
        let f = write_tmp("a,b\n1,2\n3\n");
        let schema = infer_schema(f.path(), 1, None).unwrap();
        assert!(load_dataset(f.path(), &schema, &LoadOptions::default()).is_err());
    }

    #[test]
    fn empty_table_errors() {
        let f = write_tmp("a,b\n");
        assert!(matches!(infer_schema(f.path(), 10, None), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn schema_round_trip_preserves_order() {
        let schema = Schema {
            variables: vec![
                VariableSpec { name: "b".into(), kind: VarKind::Numeric },
                VariableSpec { name: "a".into(), kind: VarKind::Categorical },
            ],
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        schema.save(f.path()).unwrap();
        let back = Schema::load(f.path()).unwrap();
        assert_eq!(back.variables[0].name, "b");
        assert_eq!(back.variables[1].kind, VarKind::Categorical);
    }

    #[test]
    fn write_back_round_trip() {
        let f = write_tmp("id,num,cat\na,1.5,x\nb,,y\nc,2.25,?\n");
        let schema = infer_schema(f.path(), 10, Some("id")).unwrap();
        let opts = LoadOptions { id_column: Some("id".into()), ..Default::default() };
        let ds = load_dataset(f.path(), &schema, &opts).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(out.path(), Some("id")).unwrap();
        let ds2 = load_dataset(out.path(), &schema, &opts).unwrap();
        assert_eq!(ds.instance_ids, ds2.instance_ids);
        for (c1, c2) in ds.columns.iter().zip(&ds2.columns) {
            match (c1, c2) {
                (Column::Numeric(a), Column::Numeric(b)) => assert_eq!(a, b),
                (
                    Column::Categorical { codes: a, dict: da },
                    Column::Categorical { codes: b, dict: db },
                ) => {
                    let toks = |codes: &[Option<u32>], dict: &[String]| -> Vec<Option<String>> {
                        codes.iter().map(|c| c.map(|c| dict[c as usize].clone())).collect()
                    };
                    assert_eq!(toks(a, da), toks(b, db));
                }
                _ => panic!("kind changed"),
            }
        }
    }
}
