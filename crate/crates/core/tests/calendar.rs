use chrono::{Datelike, NaiveDate};
use timelowfer::cycles::{decomposition_csv_header, decomposition_csv_row};
use timelowfer::{decompose_date, CycleComponent};

fn month_lengths(year: i32) -> [usize; 12] {
    let feb = if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 { 29 } else { 28 };
    [31, feb, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
}

#[test]
fn day_of_year_is_cumulative_month_days_plus_day_of_month_1900_to_2100() {
    let start = NaiveDate::from_ymd_opt(1900, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2100, 12, 31).unwrap();
    let mut days = 0;
    for date in start.iter_days().take_while(|d| *d <= end) {
        let c = decompose_date(date).unwrap();
        let cumulative: usize = month_lengths(date.year())[..c.month_of_year()].iter().sum();
        assert_eq!(c.day_of_year(), cumulative + c.day_of_month(), "{date}");
        assert_eq!(c.week_of_year(), c.day_of_year() / 7);
        assert_eq!(c.week_of_month(), c.day_of_month() / 7);
        assert_eq!(c.season_of_year(), c.month_of_year() / 3);
        assert_eq!(c.month_of_season(), c.month_of_year() % 3);
        days += 1;
    }
    assert_eq!(days, 201 * 365 + 49);
}

#[test]
fn every_index_is_reached_somewhere() {
    let mut seen: Vec<Vec<bool>> = CycleComponent::ALL.iter().map(|c| vec![false; c.cardinality()]).collect();
    let start = NaiveDate::from_ymd_opt(1996, 1, 1).unwrap();
    for date in start.iter_days().take(366 * 4) {
        for (i, (_, v)) in decompose_date(date).unwrap().iter().enumerate() {
            seen[i][v] = true;
        }
    }
    // Digits only reach the values the covered years have.
    for (c, s) in CycleComponent::ALL.iter().zip(&seen).take(10) {
        assert!(s.iter().all(|&b| b), "{c:?}");
    }
}

#[test]
fn csv_row_matches_header_width() {
    let header = decomposition_csv_header();
    let date = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    let row = decomposition_csv_row(date, &decompose_date(date).unwrap());
    assert_eq!(header.split(',').count(), row.split(',').count());
    assert!(row.starts_with("2014-01-01,2,0,0,0,0,0,0,0,0,0,4,1,0,2"));
}
