// SPDX-License-Identifier: Apache-2.0

pub mod cli;
pub mod error;
pub mod service;
pub mod session;
pub mod store;
