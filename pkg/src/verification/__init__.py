from .cases import ManufacturedCase, CASE_NAMES, get_case, case_suite
from .reports import EstimateReport, ConvergenceTable, write_reports
