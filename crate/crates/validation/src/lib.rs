//! Holds the `acceptance` integration test, kept in its own package so it runs
//! after every other suite in the workspace.
