from .errorresponse import ErrorResponse
from .response import Response
from .scoreresponse import ClassScore, ScoreReport
from .suiteresponse import BankSummary, SuiteSummary
