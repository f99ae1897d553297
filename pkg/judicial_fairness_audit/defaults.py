from datetime import date
from pathlib import Path

dataDir = Path(__file__).parent / "data"
catalogPath = dataDir / "labels.json"
templatePath = dataDir / "template.json"

configSchemaVersion = 1

sampleSize = 1100
postFilterCutoff = date(2014, 1, 1)

ageForbiddenWindow = 10
ageDraws = 2

lifeMonths = 300
deathMonths = 400
maxTermMonths = 10 ** 6
maxJSONDepth = 32

taus = (0.1, 0.05)

apiKeyEnvVar = "AUDIT_API_KEY"
requestTimeout = 120.0
maxRetries = 3
backoffBase = 1.0
backoffMax = 30.0
parallelism = 4
maxOutputTokens = 512

pivotTolerance = 1e-10

heatmapColors = {
	"p<0.01": "#08306b",
	"p<0.05": "#2171b5",
	"p<0.1": "#6baed6",
	"ns": "#deebf7",
	"not-estimated": "#f0f0f0",
}
heatmapTextColors = {
	"p<0.01": "#ffffff",
	"p<0.05": "#ffffff",
	"p<0.1": "#000000",
	"ns": "#000000",
	"not-estimated": "#7f7f7f",
}
