# Integration tests package

