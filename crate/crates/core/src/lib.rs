//! Functional and cycle-approximate simulator for the UVP unlimited-length
//! vector extension: instruction encoding, machine state, fixed-point
//! datapath, element exchange engine, issue/hazard sequencer, assembler
//! front end and a kernel benchmark harness.

pub mod bench;
pub mod datapath;
pub mod exe;
pub mod frontend;
pub mod isa;
pub mod machine;
pub mod sequencer;
