"""Flow-record ingestion, cleaning, feature selection and synthetic corpora."""
