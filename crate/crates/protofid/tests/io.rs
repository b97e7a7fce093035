use std::path::Path;

use protofid::io::{self, IoError};
use protofid_core::dataset::PIMA_LABEL;
use protofid_core::FeatureSchema;

const HEADER: &str = "Pregnancies,Glucose,BloodPressure,SkinThickness,Insulin,BMI,DiabetesPedigreeFunction,Age,Outcome\n";

fn read(text: &str) -> Result<protofid_core::LabeledDataset, IoError> {
    io::read_csv(text.as_bytes(), &FeatureSchema::pima(), PIMA_LABEL)
}

#[test]
fn bundled_dataset_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/pima.csv");
    let data = io::load_csv(&path, &FeatureSchema::pima(), PIMA_LABEL).unwrap();
    assert_eq!(data.n_rows(), 768);
    assert_eq!(data.feature_names().len(), 8);
    assert_eq!(data.labels().iter().filter(|&&y| y == 1).count(), 268);
}

#[test]
fn header_only_is_empty() {
    assert!(matches!(read(HEADER), Err(IoError::EmptyFile)));
}

#[test]
fn bad_cell_reports_row_and_column() {
    let text = format!("{HEADER}1,100,70,20,80,30.1,0.5,40,0\n2,110,72,25,90,31.0,0.4,35,1\n3,abc,60,0,0,28.0,0.3,30,0\n");
    match read(&text) {
        Err(IoError::NonNumericCell { row, column }) => {
            assert_eq!(row, 3);
            assert_eq!(column, "Glucose");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_column_is_named() {
    let text = "Pregnancies,Glucose,BloodPressure,SkinThickness,Insulin,DiabetesPedigreeFunction,Age,Outcome\n1,2,3,4,5,6,7,0\n";
    match read(text) {
        Err(IoError::MissingColumn(c)) => assert_eq!(c, "BMI"),
        other => panic!("unexpected {other:?}"),
    }
    let text = HEADER.replace(",Outcome", "");
    assert!(matches!(read(&format!("{text}1,2,3,4,5,6,7,8\n")), Err(IoError::MissingColumn(c)) if c == "Outcome"));
}

#[test]
fn extra_columns_and_order_are_ignored() {
    let text = "Id,Outcome,Age,DiabetesPedigreeFunction,BMI,Insulin,SkinThickness,BloodPressure,Glucose,Pregnancies\n\
                9,1,50,0.6,33.6,0,35,72,148,6\n";
    let data = read(text).unwrap();
    assert_eq!(data.row(0), &[6.0, 148.0, 72.0, 35.0, 0.0, 33.6, 0.6, 50.0]);
    assert_eq!(data.labels(), &[1]);
}

#[test]
fn json_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nested/out.json");
    io::write_json(&p, &vec![1.5, 2.0]).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.ends_with('\n'));
    let back: Vec<f64> = io::read_json(&p).unwrap();
    assert_eq!(back, vec![1.5, 2.0]);

    let c = dir.path().join("t.csv");
    io::write_csv(&c, &["a", "b"], &[vec!["1", "x,y"]]).unwrap();
    assert_eq!(std::fs::read_to_string(&c).unwrap(), "a,b\n1,\"x,y\"\n");
}

#[test]
fn rule_file_errors_carry_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.rules");
    std::fs::write(&p, "rule r1: BMI >= -> 1\n").unwrap();
    match io::load_rules(&p) {
        Err(IoError::Rules { path, .. }) => assert_eq!(path, p),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(io::load_rules(&dir.path().join("none")), Err(IoError::File { .. })));
}
