use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Corpus, CorpusError, CvTemplate, NameEntry, Vacancy, CV_FILE, NAME_FILE, VACANCY_FILE};

const NAME_HEADER: [&str; 5] = ["first", "last", "ethnicity", "gender", "source"];

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// When set, every vacancy occupation must be one of these labels.
    pub occupations: Option<Vec<String>>,
}

/// Load and validate the three corpus files.
pub fn load_corpus(
    vacancy_file: impl AsRef<Path>,
    cv_file: impl AsRef<Path>,
    name_file: impl AsRef<Path>,
) -> Result<Corpus, CorpusError> {
    load_corpus_with(vacancy_file, cv_file, name_file, &LoadOptions::default())
}

pub fn load_corpus_with(
    vacancy_file: impl AsRef<Path>,
    cv_file: impl AsRef<Path>,
    name_file: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<Corpus, CorpusError> {
    let vacancies: Vec<Vacancy> = read_jsonl(vacancy_file.as_ref())?;
    let cvs: Vec<CvTemplate> = read_jsonl(cv_file.as_ref())?;
    let names = read_names(name_file.as_ref())?;
    let corpus = Corpus {
        vacancies,
        cvs,
        names,
    };
    corpus.validate(options.occupations.as_deref())?;
    corpus.warn_on_imbalance();
    Ok(corpus)
}

/// Load `vacancies.jsonl`, `cvs.jsonl` and `names.csv` from one directory.
/// `names` overrides the name-pool location.
pub fn load_corpus_dir(dir: impl AsRef<Path>, names: Option<&Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    let name_file = names.map(Path::to_path_buf).unwrap_or_else(|| dir.join(NAME_FILE));
    load_corpus(dir.join(VACANCY_FILE), dir.join(CV_FILE), name_file)
}

/// Write the corpus as `vacancies.jsonl`, `cvs.jsonl`, `names.csv` under `dir`.
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_jsonl(&dir.join(VACANCY_FILE), &corpus.vacancies)?;
    write_jsonl(&dir.join(CV_FILE), &corpus.cvs)?;
    write_names(&dir.join(NAME_FILE), &corpus.names)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("corpus records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn read_names(path: &Path) -> Result<Vec<NameEntry>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| schema(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != NAME_HEADER {
        return Err(schema(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                NAME_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut names = Vec::new();
    for (i, record) in reader.deserialize::<NameEntry>().enumerate() {
        names.push(record.map_err(|e| schema(path, i + 2, e.to_string()))?);
    }
    Ok(names)
}

fn write_names(path: &Path, names: &[NameEntry]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for n in names {
        w.serialize(n).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    }
    if names.is_empty() {
        w.write_record(NAME_HEADER).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    }
    w.flush().map_err(io_err(path))
}
