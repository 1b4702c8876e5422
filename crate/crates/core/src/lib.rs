//! Travel diaries from smartphone location streams, and two ways to combine
//! them with a traditional diary survey.

pub mod diary;
pub mod episode;
pub mod geo;
pub mod harmonize;
pub mod multisource;
pub mod simulate;
pub mod stops;
pub mod trace;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geodesy.md")]
    mod geodesy {}
    #[doc = include_str!("../../../book/src/stop-detection.md")]
    mod stop_detection {}
    #[doc = include_str!("../../../book/src/diary.md")]
    mod diary {}
    #[doc = include_str!("../../../book/src/harmonization.md")]
    mod harmonization {}
    #[doc = include_str!("../../../book/src/multisource.md")]
    mod multisource {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
