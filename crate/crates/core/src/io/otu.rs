//! OTU table ingestion: tab-separated, first column species ID, header row
//! sample IDs, integer cells.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::model::OtuTable;
use crate::{Error, Result};

pub fn load_otu(path: &Path) -> Result<OtuTable> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty OTU file"))?;
    let header = header?;
    let mut header_fields = header.split('\t');
    header_fields
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let sample_ids: Vec<String> = header_fields.map(|s| s.trim().to_string()).collect();
    if sample_ids.is_empty() {
        return Err(Error::parse(1, "OTU header declares no samples"));
    }
    if sample_ids.iter().any(|s| s.is_empty()) {
        return Err(Error::parse(1, "empty sample ID in header"));
    }
    {
        let mut seen = HashSet::new();
        for id in &sample_ids {
            if !seen.insert(id) {
                return Err(Error::parse(1, format!("duplicate sample ID '{id}'")));
            }
        }
    }

    let mut species_ids = Vec::new();
    let mut seen_species = HashSet::new();
    let mut rows: Vec<Vec<u64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let species = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing species ID"))?
            .trim()
            .to_string();
        if species.is_empty() {
            return Err(Error::parse(line_no, "empty species ID"));
        }
        if !seen_species.insert(species.clone()) {
            return Err(Error::parse(
                line_no,
                format!("duplicate species ID '{species}'"),
            ));
        }
        let counts: Vec<u64> = fields
            .enumerate()
            .map(|(col, cell)| {
                cell.trim().parse::<u64>().map_err(|_| {
                    Error::parse(
                        line_no,
                        format!(
                            "cell {} of species '{species}' is '{}', not a nonnegative integer",
                            col + 2,
                            cell.trim()
                        ),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if counts.len() != sample_ids.len() {
            return Err(Error::parse(
                line_no,
                format!(
                    "row has {} count cells but the header declares {} samples",
                    counts.len(),
                    sample_ids.len()
                ),
            ));
        }
        species_ids.push(species);
        rows.push(counts);
    }
    if rows.is_empty() {
        return Err(Error::parse(0, "OTU file contains no species rows"));
    }
    let (i, j) = (rows.len(), sample_ids.len());
    let mut counts = Array2::zeros((i, j));
    for (r, row) in rows.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            counts[[r, c]] = n;
        }
    }
    OtuTable::new(counts, species_ids, sample_ids, None)
}

pub fn save_otu(path: &Path, table: &OtuTable) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "species_id")?;
    for id in &table.sample_ids {
        write!(out, "\t{id}")?;
    }
    writeln!(out)?;
    for (r, species) in table.species_ids.iter().enumerate() {
        write!(out, "{species}")?;
        for c in 0..table.n_samples() {
            write!(out, "\t{}", table.counts[[r, c]])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    // the published example table: 10 species in 3 Russian and 3 Finnish
    // samples
    pub(crate) const EXAMPLE_TABLE: &str = "\
species_id\tRUS1\tRUS2\tRUS3\tFIN1\tFIN2\tFIN3
Bifidobacterium longum\t0\t73222\t3014074\t14294\t7291\t9228
Bifidobacterium bifidum\t3594189\t49223\t0\t11177\t11656816\t14759
Escherichia coli\t4210380\t23025\t635855\t29700\t7508\t556208
Bifidobacterium breve\t0\t136\t245827\t19312\t7223273\t0
Bacteroides fragilis\t0\t88751\t0\t6257732\t343\t75506
Bacteroides vulgatus\t0\t7454\t0\t4745\t0\t25859
Bacteroides dorei\t0\t0\t0\t0\t0\t0
Bifidobacterium adolescentis\t0\t111248\t1626357\t735715\t1194\t0
Bacteroides uniformis\t0\t3901\t0\t5859\t1633\t28638
Ruminococcus gnavus\t145485\t33004\t92101\t253830\t29\t1186774
";

    #[test]
    fn example_table_round_trips_byte_identically() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("otu.tsv");
        std::fs::write(&path, EXAMPLE_TABLE).unwrap();
        let table = load_otu(&path).unwrap();
        assert_eq!(table.n_species(), 10);
        assert_eq!(table.n_samples(), 6);
        assert_eq!(table.species_ids[0], "Bifidobacterium longum");
        assert_eq!(table.counts[[0, 1]], 73222); // RUS2
        assert_eq!(table.counts[[9, 5]], 1186774);
        // column sums equal stored depths
        for (jj, &d) in table.depths.iter().enumerate() {
            let sum: u64 = table.counts.column(jj).iter().sum();
            assert_eq!(d, sum);
        }
        let out = dir.path().join("roundtrip.tsv");
        save_otu(&out, &table).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), EXAMPLE_TABLE.as_bytes());
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_otu(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "species_id\ts1\n").unwrap();
        assert!(matches!(load_otu(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn distinct_parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.tsv");

        std::fs::write(&path, "species_id\ts1\ts2\na\t1\t2.5\n").unwrap();
        match load_otu(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("2.5"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "species_id\ts1\ts2\na\t1\t2\na\t3\t4\n").unwrap();
        match load_otu(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate species"), "{message}");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }

        std::fs::write(&path, "species_id\ts1\ts2\na\t1\n").unwrap();
        match load_otu(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("header declares"), "{message}");
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }
}
